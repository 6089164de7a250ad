use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{param_err, Result};
use crate::linalg::{convolve_reflect, gaussian_kernel};
use crate::rng::{substream, tag};
use crate::spectra::AbundanceMap;

fn check_pure_fraction(f: f64) -> Result<()> {
    if !(0.0..1.0).contains(&f) {
        return Err(param_err(format!("pure_pixel_fraction {f} outside [0, 1)")));
    }
    Ok(())
}

/// Replaces `ceil(fraction * N)` distinct random columns with random one-hot
/// columns.
fn inject_pure(a: &mut DMatrix<f64>, fraction: f64, seed: u64) {
    let (p, n) = a.shape();
    // guard against 0.3 * 10 = 3.0000000000000004
    let count = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if count == 0 {
        return;
    }
    let mut rng = substream(seed, tag::PURE, 0);
    let mut chosen = index::sample(&mut rng, n, count.min(n)).into_vec();
    chosen.sort_unstable();
    for j in chosen {
        let hot = rng.random_range(0..p);
        a.column_mut(j).fill(0.0);
        a[(hot, j)] = 1.0;
    }
}

/// `n` i.i.d. Dirichlet(`alpha`) rows, then pure-pixel injection.
pub fn sample_abundances_dirichlet(
    n: usize,
    alpha: &[f64],
    pure_fraction: f64,
    seed: u64,
) -> Result<AbundanceMap> {
    let p = alpha.len();
    if p < 2 {
        return Err(param_err("dirichlet needs at least two classes"));
    }
    check_pure_fraction(pure_fraction)?;
    let gammas = alpha
        .iter()
        .map(|&a| {
            if !(a > 0.0 && a.is_finite()) {
                return Err(param_err(format!("concentration {a} must be positive")));
            }
            Gamma::new(a, 1.0).map_err(|e| param_err(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = DMatrix::zeros(p, n);
    for j in 0..n {
        let mut rng = substream(seed, tag::DIRICHLET, j as u64);
        let g: Vec<f64> = gammas.iter().map(|d| d.sample(&mut rng)).collect();
        let s: f64 = g.iter().sum();
        let mut col = data.column_mut(j);
        if s > 0.0 {
            for (k, v) in g.iter().enumerate() {
                col[k] = v / s;
            }
        } else {
            // every draw underflowed (tiny alpha); the limit is a vertex
            col[rng.random_range(0..p)] = 1.0;
        }
    }
    inject_pure(&mut data, pure_fraction, seed);
    AbundanceMap::from_columns(data, true)
}

fn blur(field: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let mut rows = vec![0.0; h * w];
    for r in 0..h {
        let out = convolve_reflect(&field[r * w..(r + 1) * w], kernel);
        rows[r * w..(r + 1) * w].copy_from_slice(&out);
    }
    let mut out = vec![0.0; h * w];
    let mut col = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            col[r] = rows[r * w + c];
        }
        for (r, v) in convolve_reflect(&col, kernel).into_iter().enumerate() {
            out[r * w + c] = v;
        }
    }
    out
}

fn standardize(f: &mut [f64]) {
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in f.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

/// Piecewise-smooth abundances on an `h x w` grid: `p` blurred white-noise
/// fields, each scaled to unit variance, mapped through a softmax with
/// temperature `sharpness`. Pixels are row-major.
pub fn sample_abundances_grf(
    h: usize,
    w: usize,
    p: usize,
    correlation_length: f64,
    sharpness: f64,
    pure_fraction: f64,
    seed: u64,
) -> Result<AbundanceMap> {
    if h < 4 || w < 4 {
        return Err(param_err(format!("grid {h}x{w} smaller than 4x4")));
    }
    if p < 2 {
        return Err(param_err("random field needs at least two classes"));
    }
    if !(correlation_length >= 1.0 && correlation_length < h.min(w) as f64) {
        return Err(param_err(format!(
            "correlation_length {correlation_length} must lie in [1, {})",
            h.min(w)
        )));
    }
    if !(sharpness > 0.0 && sharpness.is_finite()) {
        return Err(param_err("sharpness must be positive"));
    }
    check_pure_fraction(pure_fraction)?;
    let kernel = gaussian_kernel(correlation_length);
    let fields: Vec<Vec<f64>> = (0..p)
        .map(|k| {
            let mut rng = substream(seed, tag::GRF, k as u64);
            let white: Vec<f64> = (0..h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut f = blur(&white, h, w, &kernel);
            standardize(&mut f);
            f
        })
        .collect();
    let n = h * w;
    let mut data = DMatrix::zeros(p, n);
    for j in 0..n {
        let top = fields.iter().map(|f| f[j]).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = fields.iter().map(|f| ((f[j] - top) / sharpness).exp()).collect();
        let s: f64 = e.iter().sum();
        for (k, v) in e.iter().enumerate() {
            data[(k, j)] = v / s;
        }
    }
    inject_pure(&mut data, pure_fraction, seed);
    AbundanceMap::from_columns(data, true)
}
