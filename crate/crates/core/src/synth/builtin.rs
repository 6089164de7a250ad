//! Smooth analytic stand-ins for three common materials, sampled on an
//! evenly spaced 400-2500 nm grid.

use crate::error::{param_err, Result};
use crate::spectra::SpectralLibrary;

pub const BUILTIN_CLASSES: [&str; 3] = ["vegetation", "soil", "water"];

pub fn builtin_wavelengths(bands: usize) -> Vec<f64> {
    if bands == 1 {
        return vec![1450.0];
    }
    (0..bands)
        .map(|b| 400.0 + 2100.0 * b as f64 / (bands - 1) as f64)
        .collect()
}

fn bump(x: f64, centre: f64, width: f64) -> f64 {
    (-((x - centre) / width).powi(2)).exp()
}

fn vegetation(x: f64) -> f64 {
    let visible = 0.04 + 0.06 * bump(x, 550.0, 35.0);
    let edge = 0.45 / (1.0 + (-(x - 715.0) / 15.0).exp());
    let decline = 1.0 - 0.35 * ((x - 1100.0) / 1400.0).clamp(0.0, 1.0);
    let water = (1.0 - 0.5 * bump(x, 1450.0, 60.0)) * (1.0 - 0.6 * bump(x, 1940.0, 70.0));
    (visible + edge * decline) * water
}

/// Single-scattering albedo, so it can feed the Hapke model.
fn soil_albedo(x: f64) -> f64 {
    let base = 0.35 + 0.4 * (1.0 - (-(x - 400.0) / 600.0).exp());
    base * (1.0 - 0.1 * bump(x, 1400.0, 40.0))
        * (1.0 - 0.15 * bump(x, 1900.0, 50.0))
        * (1.0 - 0.08 * bump(x, 2200.0, 30.0))
}

/// Turbid water: a sediment peak in the green-red, absorbed past the NIR.
fn water(x: f64) -> f64 {
    let absorbed = 1.0 / (1.0 + (-(x - 850.0) / 60.0).exp());
    0.01 + (0.03 + 0.09 * bump(x, 580.0, 110.0)) * (1.0 - absorbed)
}

/// Vegetation, soil (albedo) and water with `bands` samples each.
pub fn builtin_library(bands: usize) -> Result<SpectralLibrary> {
    if bands < 2 {
        return Err(param_err("builtin spectra need at least two bands"));
    }
    let wl = builtin_wavelengths(bands);
    let curves: [fn(f64) -> f64; 3] = [vegetation, soil_albedo, water];
    let classes = BUILTIN_CLASSES
        .iter()
        .zip(curves)
        .map(|(name, f)| (name.to_string(), vec![wl.iter().map(|&x| f(x)).collect()]))
        .collect();
    SpectralLibrary::new(bands, classes)
}
