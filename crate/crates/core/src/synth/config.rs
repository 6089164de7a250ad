use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::builtin::builtin_library;
use crate::error::{param_err, Result};
use crate::spectra::{load_library, SpectralLibrary};

/// Closed interval `[lo, hi]`, serialised as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub(crate) fn validate(&self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite() && self.0 <= self.1) {
            return Err(param_err(format!("{what}: empty interval {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            self.0 + (self.1 - self.0) * rng.random::<f64>()
        }
    }
}

fn default_mu2() -> f64 {
    1.0
}
fn default_e_sun() -> f64 {
    1.0
}
fn default_e_sky() -> f64 {
    0.2
}
fn default_glmm_smoothness() -> f64 {
    8.0
}

/// How the variants of one class are generated from its base signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClassVariability {
    /// Every variant equals the base.
    None,
    /// Base read as single-scattering albedo; incidence/emergence cosines drawn
    /// per variant.
    Hapke { mu1: Interval, mu2: Interval },
    /// Calibration-panel atmospheric compensation error; only `mu1` varies.
    Atmospheric {
        mu1: Interval,
        #[serde(default = "default_mu2")]
        mu2: f64,
        #[serde(default = "default_e_sun")]
        e_sun: f64,
        #[serde(default = "default_e_sky")]
        e_sky: f64,
    },
    /// One positive factor per variant.
    ElmmScaling { psi: Interval },
    /// Smooth per-band factors per variant.
    GlmmScaling {
        psi: Interval,
        /// Gaussian smoothing width of the log-factors, in bands.
        #[serde(default = "default_glmm_smoothness")]
        smoothness: f64,
    },
}

impl ClassVariability {
    pub(crate) fn validate(&self) -> Result<()> {
        let mu = |i: &Interval, what: &str| -> Result<()> {
            i.validate(what)?;
            if i.lo() <= 0.0 || i.hi() > 1.0 {
                return Err(param_err(format!("{what} must lie in (0, 1]")));
            }
            Ok(())
        };
        match self {
            ClassVariability::None => Ok(()),
            ClassVariability::Hapke { mu1, mu2 } => {
                mu(mu1, "hapke mu1")?;
                mu(mu2, "hapke mu2")
            }
            ClassVariability::Atmospheric {
                mu1,
                mu2,
                e_sun,
                e_sky,
            } => {
                mu(mu1, "atmospheric mu1")?;
                mu(&Interval(*mu2, *mu2), "atmospheric mu2")?;
                if !(*e_sun > 0.0 && *e_sky > 0.0) {
                    return Err(param_err("irradiances must be positive"));
                }
                Ok(())
            }
            ClassVariability::ElmmScaling { psi } | ClassVariability::GlmmScaling { psi, .. } => {
                psi.validate("scaling range")?;
                if psi.lo() <= 0.0 {
                    return Err(param_err("scaling range must be positive"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariabilityConfig {
    /// One entry per class, in library order.
    pub classes: Vec<ClassVariability>,
    /// Variants generated per class (`K`).
    pub n_variants: usize,
    #[serde(default)]
    pub seed: u64,
}

impl VariabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_variants == 0 {
            return Err(param_err("n_variants must be at least 1"));
        }
        self.classes.iter().try_for_each(ClassVariability::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum AbundanceGenerator {
    Dirichlet {
        alpha: Vec<f64>,
    },
    /// Blurred white noise mapped through a softmax of temperature `sharpness`.
    Grf {
        correlation_length: f64,
        sharpness: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbundanceFieldConfig {
    #[serde(flatten)]
    pub generator: AbundanceGenerator,
    #[serde(default)]
    pub pure_pixel_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Where the per-class base signatures come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSpectra {
    /// Synthetic vegetation / soil albedo / water curves.
    Builtin { bands: usize },
    /// Library CSV with one signature per class.
    File { path: PathBuf },
}

impl BaseSpectra {
    /// Relative file paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<SpectralLibrary> {
        match self {
            BaseSpectra::Builtin { bands } => builtin_library(*bands),
            BaseSpectra::File { path } => {
                let p = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                load_library(p)
            }
        }
    }
}

fn default_snr() -> Option<f64> {
    Some(30.0)
}

/// Everything needed to synthesise one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub base: BaseSpectra,
    pub abundances: AbundanceFieldConfig,
    pub variability: VariabilityConfig,
    /// `null` for a noiseless scene.
    #[serde(default = "default_snr")]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    /// Three builtin materials: vegetation with smooth per-band scaling, soil
    /// through the Hapke model, water through the atmospheric model; GRF
    /// abundances, 30 dB.
    pub fn reference(height: usize, width: usize, bands: usize) -> Self {
        Self {
            height,
            width,
            base: BaseSpectra::Builtin { bands },
            abundances: AbundanceFieldConfig {
                generator: AbundanceGenerator::Grf {
                    correlation_length: 5.0,
                    sharpness: 0.35,
                },
                pure_pixel_fraction: 0.0,
                seed: 0,
            },
            variability: VariabilityConfig {
                classes: vec![
                    ClassVariability::GlmmScaling {
                        psi: Interval(0.9, 1.11),
                        smoothness: 8.0,
                    },
                    ClassVariability::Hapke {
                        mu1: Interval(0.5, 1.0),
                        mu2: Interval(0.5, 1.0),
                    },
                    ClassVariability::Atmospheric {
                        mu1: Interval(0.4, 1.0),
                        mu2: 1.0,
                        e_sun: 1.0,
                        e_sky: 0.2,
                    },
                ],
                n_variants: 20,
                seed: 0,
            },
            snr_db: Some(30.0),
            seed: 0,
        }
    }
}
