use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::spectra::{SpectralImage, SpectralLibrary};

#[derive(Debug, Clone, PartialEq)]
pub enum TransformWeights {
    /// Keep the bands flagged `true`.
    Mask(Vec<bool>),
    /// Per-band nonnegative factors.
    Diagonal(Vec<f64>),
    /// `d x L` projection.
    Dense(DMatrix<f64>),
}

/// Affine band-space map `x -> W x + b`, applied alike to pixels and
/// library signatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Repr", into = "Repr")]
pub struct SpectralTransform {
    weights: TransformWeights,
    offset: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Repr {
    Mask {
        mask: Vec<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
    },
    Weights {
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
    },
    Dense {
        /// Row-major rows of `W`.
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
    },
}

impl TryFrom<Repr> for SpectralTransform {
    type Error = Error;
    fn try_from(r: Repr) -> Result<Self> {
        let (t, offset) = match r {
            Repr::Mask { mask, offset } => (Self::mask(mask)?, offset),
            Repr::Weights { weights, offset } => (Self::weights(weights)?, offset),
            Repr::Dense { matrix, offset } => {
                let d = matrix.len();
                let l = matrix.first().map_or(0, Vec::len);
                if matrix.iter().any(|r| r.len() != l) {
                    return Err(dim_err("ragged dense transform"));
                }
                (Self::dense(DMatrix::from_fn(d, l, |i, j| matrix[i][j]))?, offset)
            }
        };
        match offset {
            Some(b) => t.with_offset(b),
            None => Ok(t),
        }
    }
}

impl From<SpectralTransform> for Repr {
    fn from(t: SpectralTransform) -> Self {
        let offset = t.offset;
        match t.weights {
            TransformWeights::Mask(mask) => Repr::Mask { mask, offset },
            TransformWeights::Diagonal(weights) => Repr::Weights { weights, offset },
            TransformWeights::Dense(m) => Repr::Dense {
                matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
                offset,
            },
        }
    }
}

impl SpectralTransform {
    pub fn mask(mask: Vec<bool>) -> Result<Self> {
        if !mask.iter().any(|&k| k) {
            return Err(param_err("mask keeps no band"));
        }
        Ok(Self {
            weights: TransformWeights::Mask(mask),
            offset: None,
        })
    }

    pub fn identity(bands: usize) -> Self {
        Self {
            weights: TransformWeights::Mask(vec![true; bands]),
            offset: None,
        }
    }

    pub fn weights(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(param_err("band weights must be finite and nonnegative"));
        }
        Ok(Self {
            weights: TransformWeights::Diagonal(w),
            offset: None,
        })
    }

    /// Requires full row rank.
    pub fn dense(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() == 0 || w.ncols() == 0 || w.iter().any(|v| !v.is_finite()) {
            return Err(param_err("dense transform must be nonempty and finite"));
        }
        if w.nrows() > w.ncols() || w.rank(1e-10 * w.amax()) < w.nrows() {
            return Err(Error::Rank("dense transform lacks full row rank".into()));
        }
        Ok(Self {
            weights: TransformWeights::Dense(w),
            offset: None,
        })
    }

    pub fn with_offset(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.output_bands() {
            return Err(dim_err(format!(
                "offset has {} entries, transform outputs {}",
                b.len(),
                self.output_bands()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("offset".into()));
        }
        self.offset = Some(b);
        Ok(self)
    }

    pub fn kind(&self) -> &TransformWeights {
        &self.weights
    }

    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    pub fn input_bands(&self) -> usize {
        match &self.weights {
            TransformWeights::Mask(m) => m.len(),
            TransformWeights::Diagonal(w) => w.len(),
            TransformWeights::Dense(m) => m.ncols(),
        }
    }

    pub fn output_bands(&self) -> usize {
        match &self.weights {
            TransformWeights::Mask(m) => m.iter().filter(|&&k| k).count(),
            TransformWeights::Diagonal(w) => w.len(),
            TransformWeights::Dense(m) => m.nrows(),
        }
    }

    /// Kept band indices for a mask.
    pub fn kept_bands(&self) -> Option<Vec<usize>> {
        match &self.weights {
            TransformWeights::Mask(m) => Some((0..m.len()).filter(|&b| m[b]).collect()),
            _ => None,
        }
    }

    /// Maps every column of `x` (`L x N`).
    pub fn apply_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_bands() {
            return Err(dim_err(format!(
                "transform expects {} bands, got {}",
                self.input_bands(),
                x.nrows()
            )));
        }
        let mut out = match &self.weights {
            TransformWeights::Mask(_) => {
                let kept = self.kept_bands().unwrap_or_default();
                x.select_rows(kept.iter())
            }
            TransformWeights::Diagonal(w) => {
                let mut y = x.clone();
                for (b, mut row) in y.row_iter_mut().enumerate() {
                    row *= w[b];
                }
                y
            }
            TransformWeights::Dense(m) => m * x,
        };
        if let Some(b) = &self.offset {
            for mut col in out.column_iter_mut() {
                for (v, o) in col.iter_mut().zip(b) {
                    *v += o;
                }
            }
        }
        Ok(out)
    }
}

/// Maps every pixel and every library signature through `t`.
pub fn apply_transform(
    t: &SpectralTransform,
    image: &SpectralImage,
    library: &SpectralLibrary,
) -> Result<(SpectralImage, SpectralLibrary)> {
    if image.bands() != library.bands() {
        return Err(dim_err("image and library band counts differ"));
    }
    if t.output_bands() < library.n_classes() {
        log::warn!(
            "transform keeps {} bands for {} classes; unmixing is underdetermined",
            t.output_bands(),
            library.n_classes()
        );
    }
    let data = t.apply_columns(image.matrix())?;
    let mut out = SpectralImage::from_matrix(&image.name, image.height(), image.width(), data)?;
    if let (Some(wl), Some(kept)) = (&image.wavelengths, t.kept_bands()) {
        out = out.with_wavelengths(kept.iter().map(|&b| wl[b]).collect())?;
    }
    let lib = library.map_signatures(t.output_bands(), |s| {
        let col = DMatrix::from_column_slice(s.len(), 1, s);
        t.apply_columns(&col)
            .map(|m| m.as_slice().to_vec())
            .unwrap_or_default()
    })?;
    Ok((out, lib))
}
