//! Browser bindings for the demo page in `www/`.
//!
//! A [`Demo`] holds one synthetic scene. The page renders its true abundance
//! map, unmixes it with a chosen solver and plots spectra; [`hapke_curve`]
//! drives the reflectance explorer.

use wasm_bindgen::prelude::*;

use varimix::spectra::rmse;
use varimix::synth::{
    builtin_wavelengths, hapke_reflectance, synthesize_from_config, ClassVariability, Interval, SceneConfig,
};
use varimix::unmix::{unmix, Algorithm, SolverOptions};
use varimix::{AbundanceMap, SceneTruth};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Abundances as RGBA bytes, one class per colour channel.
fn rgba(a: &AbundanceMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(a.n_pixels() * 4);
    for n in 0..a.n_pixels() {
        let px = a.pixel(n);
        for c in 0..3 {
            let v = px.get(c).copied().unwrap_or(0.0);
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

#[wasm_bindgen]
pub struct Demo {
    truth: SceneTruth,
    wavelengths: Vec<f64>,
    estimate: Option<AbundanceMap>,
}

#[wasm_bindgen]
impl Demo {
    /// Square scene of `size` pixels a side. `variability` in `[0, 1]`
    /// widens every class's variability range.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, bands: usize, snr_db: f64, variability: f64, seed: u64) -> Result<Demo, JsError> {
        let mut cfg = SceneConfig::reference(size, size, bands);
        let v = variability.clamp(0.0, 1.0);
        cfg.variability.classes = vec![
            ClassVariability::GlmmScaling {
                psi: Interval(1.0 - 0.5 * v, 1.0 + 0.5 * v),
                smoothness: 8.0,
            },
            ClassVariability::Hapke {
                mu1: Interval(1.0 - 0.8 * v, 1.0),
                mu2: Interval(1.0 - 0.8 * v, 1.0),
            },
            ClassVariability::Atmospheric {
                mu1: Interval(1.0 - 0.8 * v, 1.0),
                mu2: 1.0,
                e_sun: 1.0,
                e_sky: 0.2,
            },
        ];
        cfg.variability.n_variants = 5;
        cfg.snr_db = snr_db.is_finite().then_some(snr_db);
        cfg.seed = seed;
        cfg.abundances.seed = seed;
        cfg.variability.seed = seed;
        let truth = synthesize_from_config(&cfg, std::path::Path::new(".")).map_err(js_err)?;
        Ok(Demo {
            truth,
            wavelengths: builtin_wavelengths(bands),
            estimate: None,
        })
    }

    pub fn size(&self) -> usize {
        self.truth.image_noisy.width()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.wavelengths.clone()
    }

    pub fn truth_rgba(&self) -> Vec<u8> {
        rgba(&self.truth.abundances)
    }

    /// Observed spectrum of pixel (`row`, `col`).
    pub fn pixel_spectrum(&self, row: usize, col: usize) -> Vec<f64> {
        let n = row * self.size() + col;
        self.truth.image_noisy.pixel(n).to_vec()
    }

    /// True abundances of pixel (`row`, `col`).
    pub fn truth_abundances(&self, row: usize, col: usize) -> Vec<f64> {
        self.truth.abundances.pixel(row * self.size() + col).to_vec()
    }

    /// All generated variants of class `class`, concatenated.
    pub fn variants(&self, class: usize) -> Vec<f64> {
        self.truth
            .variants
            .classes()
            .get(class)
            .map(|c| c.signatures.as_slice().to_vec())
            .unwrap_or_default()
    }

    /// Unmixes the scene against the true variants and returns the abundance
    /// RMSE. `algorithm` is one of `fcls`, `mesma`, `sparse-l1`, `sparse-l0`,
    /// `elmm`, `plmm`.
    pub fn unmix(&mut self, algorithm: &str, max_iters: usize) -> Result<f64, JsError> {
        let algo: Algorithm = algorithm.parse().map_err(js_err)?;
        let opts = SolverOptions {
            max_iters: max_iters.max(1),
            ..SolverOptions::default()
        };
        let res = unmix(algo, &self.truth.image_noisy, &self.truth.variants, &opts).map_err(js_err)?;
        let err = rmse(self.truth.abundances.matrix(), res.abundances.matrix()).map_err(js_err)?;
        self.estimate = Some(res.abundances);
        Ok(err)
    }

    /// Last estimate as RGBA, empty before the first `unmix`.
    pub fn estimate_rgba(&self) -> Vec<u8> {
        self.estimate.as_ref().map(rgba).unwrap_or_default()
    }

    pub fn estimate_abundances(&self, row: usize, col: usize) -> Vec<f64> {
        self.estimate
            .as_ref()
            .map(|a| a.pixel(row * self.size() + col).to_vec())
            .unwrap_or_default()
    }
}

/// Reflectance of `n + 1` albedos evenly spaced on `[0, 1]` under the given
/// incidence and emergence cosines.
#[wasm_bindgen]
pub fn hapke_curve(mu1: f64, mu2: f64, n: usize) -> Result<Vec<f64>, JsError> {
    let n = n.max(1);
    let albedo: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    hapke_reflectance(&albedo, mu1, mu2).map_err(js_err)
}
