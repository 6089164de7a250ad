//! Library reduction, same-class pruning and spectral transformations.

mod bands;
mod fda;
mod reduce;
mod spec;
mod transform;

pub use bands::{instability_index, select_stable_bands, stability_weights, BandSelection};
pub use fda::fda_transform;
pub use reduce::{count_based_reduce, music_prune, music_residuals, CoverageMetric};
pub use spec::{PruneSpec, TransformSpec};
pub use transform::{apply_transform, SpectralTransform, TransformWeights};
