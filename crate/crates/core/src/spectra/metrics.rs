use nalgebra::DMatrix;

use super::EndmemberField;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{dot, norm};

/// `sqrt(||X - X_hat||_F^2 / count)`.
pub fn rmse(x: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(dim_err(format!(
            "rmse operands {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    if x.is_empty() {
        return Err(dim_err("rmse of empty arrays"));
    }
    let ss: f64 = x.iter().zip(x_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

/// Angle in radians between two spectra. `None` if either has zero norm.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let c = dot(a, b) / (na * nb);
    Some(c.clamp(-1.0, 1.0).acos())
}

/// How the per-pair angles are averaged in [`sam_field`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamNormalization {
    /// Divide the angle sum by `L * P * N`.
    #[default]
    BandsClassesPixels,
    /// Plain mean over the `P * N` signature pairs.
    PerPair,
}

/// Mean spectral angle between matching columns of two endmember fields.
pub fn sam_field(
    m_true: &EndmemberField,
    m_hat: &EndmemberField,
    normalization: SamNormalization,
) -> Result<f64> {
    if m_true.matrix().shape() != m_hat.matrix().shape() || m_true.bands() != m_hat.bands() {
        return Err(dim_err("endmember fields differ in shape"));
    }
    let (l, p, n) = (m_true.bands(), m_true.n_classes(), m_true.n_pixels());
    let mut total = 0.0;
    for px in 0..n {
        for c in 0..p {
            total += spectral_angle(m_true.signature(px, c), m_hat.signature(px, c))
                .ok_or_else(|| Error::DegenerateSignature(format!("zero-norm column {c} at pixel {px}")))?;
        }
    }
    let denom = match normalization {
        SamNormalization::BandsClassesPixels => (l * p * n) as f64,
        SamNormalization::PerPair => (p * n) as f64,
    };
    Ok(total / denom)
}
