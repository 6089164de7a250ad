//! Image-based endmember and bundle extraction.

mod bundles;
mod kmeans;
mod vca;

pub use bundles::{extract_bundles, extract_library, BundleExtractionConfig};
pub use kmeans::{cluster_signatures, ClusterMetric, Clustering};
pub use vca::{extract_endmembers, extract_from_matrix, Extracted};
