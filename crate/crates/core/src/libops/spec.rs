use serde::{Deserialize, Serialize};

use super::bands::{select_stable_bands, stability_weights, BandSelection};
use super::fda::fda_transform;
use super::reduce::{count_based_reduce, music_prune, CoverageMetric};
use super::transform::SpectralTransform;
use crate::error::{param_err, Result};
use crate::spectra::{SpectralImage, SpectralLibrary};

fn default_coverage() -> f64 {
    0.05
}

/// A library pruning step as written in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum PruneSpec {
    Count {
        #[serde(default = "default_coverage")]
        threshold: f64,
        target_per_class: usize,
        /// Cover by mean squared error instead of spectral angle.
        #[serde(default)]
        squared_error: bool,
    },
    Music {
        subspace_dim: usize,
        residual_threshold: f64,
    },
}

impl PruneSpec {
    pub fn apply(&self, library: &SpectralLibrary, image: &SpectralImage) -> Result<SpectralLibrary> {
        match *self {
            PruneSpec::Count {
                threshold,
                target_per_class,
                squared_error,
            } => {
                let metric = if squared_error {
                    CoverageMetric::SquaredError
                } else {
                    CoverageMetric::SpectralAngle
                };
                count_based_reduce(library, threshold, target_per_class, metric)
            }
            PruneSpec::Music {
                subspace_dim,
                residual_threshold,
            } => music_prune(library, image, subspace_dim, residual_threshold),
        }
    }
}

/// A transform derived from a library, as written in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    /// Stable-band selection by count `k` or index `threshold` (exactly one).
    Mask {
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        threshold: Option<f64>,
    },
    Weights,
    Fda {
        dim: usize,
    },
}

impl TransformSpec {
    pub fn build(&self, library: &SpectralLibrary) -> Result<SpectralTransform> {
        match *self {
            TransformSpec::Mask { k, threshold } => {
                let sel = match (k, threshold) {
                    (Some(k), None) => BandSelection::Count(k),
                    (None, Some(t)) => BandSelection::Threshold(t),
                    _ => return Err(param_err("mask needs exactly one of `k` and `threshold`")),
                };
                select_stable_bands(library, sel)
            }
            TransformSpec::Weights => stability_weights(library),
            TransformSpec::Fda { dim } => fda_transform(library, dim),
        }
    }
}
