use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::{AbundanceMap, EndmemberField, SpectralImage};
use crate::error::{dim_err, param_err, Result};
use crate::par;
use crate::rng::{self, tag};

/// Per-pixel linear mixing: pixel `n` is `M_n a_n`.
pub fn mix_forward(
    endmembers: &EndmemberField,
    abundances: &AbundanceMap,
    height: usize,
    width: usize,
) -> Result<SpectralImage> {
    let n = endmembers.n_pixels();
    if abundances.n_pixels() != n || abundances.n_classes() != endmembers.n_classes() {
        return Err(dim_err(format!(
            "field is {}x{} classes/pixels, abundances {}x{}",
            endmembers.n_classes(),
            n,
            abundances.n_classes(),
            abundances.n_pixels()
        )));
    }
    if height * width != n {
        return Err(dim_err("grid does not match pixel count"));
    }
    if !abundances.sum_to_one() {
        return Err(param_err("mix_forward needs sum-to-one abundances"));
    }
    let l = endmembers.bands();
    let mut out = DMatrix::zeros(l, n);
    for (px, mut col) in out.column_iter_mut().enumerate() {
        let m = endmembers.pixel(px);
        let a = abundances.pixel(px);
        for (p, &ap) in a.iter().enumerate() {
            col.axpy(ap, &m.column(p), 1.0);
        }
    }
    SpectralImage::from_matrix("mixed", height, width, out)
}

/// Classical linear mixing with one shared `L x P` matrix.
pub fn mix_shared(
    m: &DMatrix<f64>,
    abundances: &AbundanceMap,
    height: usize,
    width: usize,
) -> Result<SpectralImage> {
    let field = EndmemberField::shared(m, abundances.n_pixels())?;
    mix_forward(&field, abundances, height, width)
}

/// Adds white Gaussian noise at the requested SNR.
///
/// Noise variance is `mean(clean^2) / 10^(snr_db/10)`. `f64::INFINITY` means
/// noiseless. Each pixel draws from its own substream.
pub fn add_noise(image: &SpectralImage, snr_db: f64, seed: u64) -> Result<SpectralImage> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(param_err("snr_db must be finite or +inf"));
    }
    if snr_db == f64::INFINITY {
        return Ok(image.clone());
    }
    let data = image.as_slice();
    let power = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let l = image.bands();
    let cols: Vec<Vec<f64>> = par::map_range(image.n_pixels(), |n| {
        let mut rng = rng::substream(seed, tag::NOISE, n as u64);
        image
            .pixel(n)
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + sigma * z
            })
            .collect()
    });
    let mut out = SpectralImage::new(
        image.name.clone(),
        image.height(),
        image.width(),
        l,
        cols.concat(),
    )?;
    out.wavelengths = image.wavelengths.clone();
    Ok(out)
}

/// `10 log10(||clean||^2 / ||noisy - clean||^2)`.
pub fn empirical_snr_db(clean: &SpectralImage, noisy: &SpectralImage) -> Result<f64> {
    if clean.matrix().shape() != noisy.matrix().shape() {
        return Err(dim_err("image shapes differ"));
    }
    let signal: f64 = clean.as_slice().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .as_slice()
        .iter()
        .zip(noisy.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(10.0 * (signal / noise).log10())
}
