use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{dim_err, Error, Result};

/// Tolerance within which abundance rows are silently renormalized.
pub const SUM_TO_ONE_TOL: f64 = 1e-6;
/// Entries at or above this are clamped to zero; anything lower is rejected.
pub const NEGATIVE_TOL: f64 = -1e-9;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// An `height x width` reflectance cube with `bands` values per pixel.
///
/// Stored as a `bands x (height*width)` column-major matrix, so column `n` is
/// pixel `n` (row-major pixel order) and the raw buffer is pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    pub name: String,
    height: usize,
    width: usize,
    data: DMatrix<f64>,
    pub wavelengths: Option<Vec<f64>>,
}

impl SpectralImage {
    pub fn new(
        name: impl Into<String>,
        height: usize,
        width: usize,
        bands: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(dim_err("image dimensions must be positive"));
        }
        let expected = height * width * bands;
        if data.len() != expected {
            return Err(Error::PayloadSize {
                expected,
                found: data.len(),
            });
        }
        check_finite(&data, "image")?;
        Ok(Self {
            name: name.into(),
            height,
            width,
            data: DMatrix::from_vec(bands, height * width, data),
            wavelengths: None,
        })
    }

    /// Builds an image from a `bands x pixels` matrix.
    pub fn from_matrix(
        name: impl Into<String>,
        height: usize,
        width: usize,
        data: DMatrix<f64>,
    ) -> Result<Self> {
        if data.ncols() != height * width {
            return Err(dim_err(format!(
                "matrix has {} pixels, grid is {height}x{width}",
                data.ncols()
            )));
        }
        if height == 0 || width == 0 || data.nrows() == 0 {
            return Err(dim_err("image dimensions must be positive"));
        }
        check_finite(data.as_slice(), "image")?;
        Ok(Self {
            name: name.into(),
            height,
            width,
            data,
            wavelengths: None,
        })
    }

    pub fn with_wavelengths(mut self, wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != self.bands() {
            return Err(dim_err("wavelength count differs from band count"));
        }
        self.wavelengths = Some(wavelengths);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn pixel(&self, n: usize) -> &[f64] {
        let l = self.bands();
        &self.data.as_slice()[n * l..(n + 1) * l]
    }

    /// `bands x pixels` view of the cube.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Pixel-major raw buffer.
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    /// True if any value lies outside `[-0.1, 2.0]`.
    pub fn is_suspicious(&self) -> bool {
        self.data.iter().any(|&v| !(-0.1..=2.0).contains(&v))
    }
}

/// A named bundle of candidate signatures for one material class.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryClass {
    pub name: String,
    /// `bands x count` matrix, one signature per column.
    pub signatures: DMatrix<f64>,
}

/// `P` classes, each a bundle of signatures sharing a band count.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    bands: usize,
    classes: Vec<LibraryClass>,
}

impl SpectralLibrary {
    pub fn new(bands: usize, classes: Vec<(String, Vec<Vec<f64>>)>) -> Result<Self> {
        let classes = classes
            .into_iter()
            .map(|(name, sigs)| {
                if sigs.is_empty() {
                    return Err(Error::EmptyClass(name));
                }
                if let Some(bad) = sigs.iter().find(|s| s.len() != bands) {
                    return Err(dim_err(format!(
                        "class `{name}` has a signature with {} bands, expected {bands}",
                        bad.len()
                    )));
                }
                let flat: Vec<f64> = sigs.concat();
                Ok(LibraryClass {
                    name,
                    signatures: DMatrix::from_vec(bands, sigs.len(), flat),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_classes(bands, classes)
    }

    pub fn from_classes(bands: usize, classes: Vec<LibraryClass>) -> Result<Self> {
        if bands == 0 {
            return Err(dim_err("library band count must be positive"));
        }
        if classes.is_empty() {
            return Err(dim_err("library has no classes"));
        }
        for c in &classes {
            if c.signatures.ncols() == 0 {
                return Err(Error::EmptyClass(c.name.clone()));
            }
            if c.signatures.nrows() != bands {
                return Err(dim_err(format!("class `{}` band count mismatch", c.name)));
            }
            check_finite(c.signatures.as_slice(), "library")?;
            if c.signatures.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "class `{}` has negative reflectance",
                    c.name
                )));
            }
        }
        Ok(Self { bands, classes })
    }

    /// One signature per class, taken from the columns of `m` (`bands x P`).
    pub fn from_matrix(m: &DMatrix<f64>, names: Option<&[String]>) -> Result<Self> {
        let classes = (0..m.ncols())
            .map(|p| LibraryClass {
                name: names
                    .and_then(|n| n.get(p).cloned())
                    .unwrap_or_else(|| format!("class_{p}")),
                signatures: DMatrix::from_column_slice(m.nrows(), 1, m.column(p).as_slice()),
            })
            .collect();
        Self::from_classes(m.nrows(), classes)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[LibraryClass] {
        &self.classes
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.signatures.ncols()).collect()
    }

    pub fn n_signatures(&self) -> usize {
        self.class_sizes().iter().sum()
    }

    /// All signatures as one `bands x total` matrix plus the class of each column.
    pub fn flatten(&self) -> (DMatrix<f64>, Vec<usize>) {
        let total = self.n_signatures();
        let mut m = DMatrix::zeros(self.bands, total);
        let mut index = Vec::with_capacity(total);
        let mut col = 0;
        for (p, c) in self.classes.iter().enumerate() {
            for j in 0..c.signatures.ncols() {
                m.set_column(col, &c.signatures.column(j));
                index.push(p);
                col += 1;
            }
        }
        (m, index)
    }

    /// `bands x P` matrix of class mean signatures.
    pub fn class_means(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.bands, self.classes.len());
        for (p, c) in self.classes.iter().enumerate() {
            let mean = c.signatures.column_mean();
            m.set_column(p, &mean);
        }
        m
    }

    /// `bands x P` matrix using the first signature of each class.
    pub fn first_signatures(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.bands, self.classes.len());
        for (p, c) in self.classes.iter().enumerate() {
            m.set_column(p, &c.signatures.column(0));
        }
        m
    }

    /// Reorders classes so that new class `i` is old class `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            bands: self.bands,
            classes: order.iter().map(|&i| self.classes[i].clone()).collect(),
        }
    }

    pub(crate) fn map_signatures<F>(&self, bands: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let classes = self
            .classes
            .iter()
            .map(|c| {
                let cols: Vec<f64> = c
                    .signatures
                    .column_iter()
                    .flat_map(|col| f(col.as_slice()))
                    .collect();
                LibraryClass {
                    name: c.name.clone(),
                    signatures: DMatrix::from_vec(bands, c.signatures.ncols(), cols),
                }
            })
            .collect();
        Self::from_classes_unchecked_sign(bands, classes)
    }

    /// Like `from_classes` but accepts negative entries (transformed libraries).
    pub(crate) fn from_classes_unchecked_sign(bands: usize, classes: Vec<LibraryClass>) -> Result<Self> {
        for c in &classes {
            if c.signatures.ncols() == 0 {
                return Err(Error::EmptyClass(c.name.clone()));
            }
            check_finite(c.signatures.as_slice(), "library")?;
        }
        Ok(Self { bands, classes })
    }
}

/// `N x P` abundance fractions, stored pixel-major (`P x N` column-major).
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMap {
    data: DMatrix<f64>,
    sum_to_one: bool,
    class_names: Vec<String>,
}

impl AbundanceMap {
    /// Validates and cleans a `P x N` matrix (column `n` = pixel `n`).
    ///
    /// Entries in `[-1e-9, 0)` are clamped to zero. With `sum_to_one`, rows
    /// within `1e-6` of unit sum are renormalized, anything further is an error.
    pub fn from_columns(mut data: DMatrix<f64>, sum_to_one: bool) -> Result<Self> {
        check_finite(data.as_slice(), "abundances")?;
        for v in data.iter_mut() {
            if *v < NEGATIVE_TOL {
                return Err(Error::InvalidParameter(format!("negative abundance {v}")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if sum_to_one {
            for (n, mut col) in data.column_iter_mut().enumerate() {
                let s: f64 = col.iter().sum();
                if (s - 1.0).abs() > SUM_TO_ONE_TOL {
                    return Err(Error::InvalidParameter(format!("abundance row {n} sums to {s}")));
                }
                col /= s;
            }
        }
        let p = data.nrows();
        Ok(Self {
            data,
            sum_to_one,
            class_names: (0..p).map(|i| format!("class_{i}")).collect(),
        })
    }

    /// From `N` rows of `P` fractions.
    pub fn from_rows(rows: &[Vec<f64>], sum_to_one: bool) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(dim_err("ragged abundance rows"));
        }
        let flat: Vec<f64> = rows.concat();
        Self::from_columns(DMatrix::from_vec(p, rows.len(), flat), sum_to_one)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_classes() {
            return Err(dim_err("class name count differs from class count"));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn n_pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.data.nrows()
    }

    pub fn sum_to_one(&self) -> bool {
        self.sum_to_one
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Fractions of pixel `n`.
    pub fn pixel(&self, n: usize) -> &[f64] {
        let p = self.n_classes();
        &self.data.as_slice()[n * p..(n + 1) * p]
    }

    /// `P x N` matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Reorders classes: new class `i` is old class `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let data = DMatrix::from_fn(self.n_classes(), self.n_pixels(), |i, n| self.data[(order[i], n)]);
        Self {
            data,
            sum_to_one: self.sum_to_one,
            class_names: order.iter().map(|&i| self.class_names[i].clone()).collect(),
        }
    }
}

/// Per-pixel `L x P` endmember matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberField {
    bands: usize,
    classes: usize,
    /// `(L*P) x N`; column `n` is `M_n` flattened column-major.
    data: DMatrix<f64>,
}

impl EndmemberField {
    pub fn new(bands: usize, classes: usize, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != bands * classes {
            return Err(dim_err(format!(
                "field rows {} != bands*classes {}",
                data.nrows(),
                bands * classes
            )));
        }
        check_finite(data.as_slice(), "endmember field")?;
        if data.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "endmember field has negative reflectance".into(),
            ));
        }
        Ok(Self { bands, classes, data })
    }

    /// Builds a field from per-pixel matrices.
    pub fn from_matrices(mats: &[DMatrix<f64>]) -> Result<Self> {
        let first = mats.first().ok_or_else(|| dim_err("empty endmember field"))?;
        let (l, p) = first.shape();
        let mut data = DMatrix::zeros(l * p, mats.len());
        for (n, m) in mats.iter().enumerate() {
            if m.shape() != (l, p) {
                return Err(dim_err("inconsistent per-pixel endmember shapes"));
            }
            data.column_mut(n).copy_from_slice(m.as_slice());
        }
        Self::new(l, p, data)
    }

    /// The same matrix at every pixel.
    pub fn shared(m: &DMatrix<f64>, n_pixels: usize) -> Result<Self> {
        let (l, p) = m.shape();
        let mut data = DMatrix::zeros(l * p, n_pixels);
        for mut col in data.column_iter_mut() {
            col.copy_from_slice(m.as_slice());
        }
        Self::new(l, p, data)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_classes(&self) -> usize {
        self.classes
    }

    pub fn n_pixels(&self) -> usize {
        self.data.ncols()
    }

    /// `M_n` as an `L x P` view.
    pub fn pixel(&self, n: usize) -> DMatrixView<'_, f64> {
        let lp = self.bands * self.classes;
        DMatrixView::from_slice(
            &self.data.as_slice()[n * lp..(n + 1) * lp],
            self.bands,
            self.classes,
        )
    }

    /// Signature of class `p` at pixel `n`.
    pub fn signature(&self, n: usize, p: usize) -> &[f64] {
        let lp = self.bands * self.classes;
        let start = n * lp + p * self.bands;
        &self.data.as_slice()[start..start + self.bands]
    }

    /// `(L*P) x N` storage.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Mean signature of each class over all pixels (`L x P`).
    pub fn class_means(&self) -> DMatrix<f64> {
        let mean: DVector<f64> = self.data.column_mean();
        DMatrix::from_column_slice(self.bands, self.classes, mean.as_slice())
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        let l = self.bands;
        let data = DMatrix::from_fn(self.data.nrows(), self.n_pixels(), |r, n| {
            let (p, b) = (r / l, r % l);
            self.data[(order[p] * l + b, n)]
        });
        Self {
            bands: l,
            classes: self.classes,
            data,
        }
    }
}

/// A synthetic scene together with everything used to generate it.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub image_noisy: SpectralImage,
    pub image_clean: SpectralImage,
    pub abundances: AbundanceMap,
    pub endmembers: EndmemberField,
    /// The generated signature variants each pixel drew from.
    pub variants: SpectralLibrary,
    /// Variant index per pixel and class (`N` rows of `P`).
    pub selected_variants: Vec<Vec<usize>>,
    /// `f64::INFINITY` for a noiseless scene.
    pub snr_db: f64,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abundance_rows_are_cleaned() {
        let a = AbundanceMap::from_rows(&[vec![0.5 + 5e-7, 0.5, -5e-10]], true).unwrap();
        let s: f64 = a.pixel(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(a.pixel(0)[2], 0.0);
        assert!(AbundanceMap::from_rows(&[vec![0.6, 0.5]], true).is_err());
        assert!(AbundanceMap::from_rows(&[vec![0.6, -0.1]], false).is_err());
        assert!(AbundanceMap::from_rows(&[vec![0.6, 0.5]], false).is_ok());
    }

    #[test]
    fn library_rejects_empty_and_ragged_classes() {
        assert!(matches!(
            SpectralLibrary::new(2, vec![("a".into(), vec![])]),
            Err(Error::EmptyClass(_))
        ));
        assert!(SpectralLibrary::new(2, vec![("a".into(), vec![vec![1.0]])]).is_err());
    }

    #[test]
    fn flatten_tracks_class_index() {
        let lib = SpectralLibrary::new(
            2,
            vec![
                ("a".into(), vec![vec![1.0, 0.0], vec![0.9, 0.1]]),
                ("b".into(), vec![vec![0.0, 1.0]]),
            ],
        )
        .unwrap();
        let (m, idx) = lib.flatten();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(idx, vec![0, 0, 1]);
        assert_eq!(m[(0, 1)], 0.9);
    }

    #[test]
    fn image_flags_suspicious_values() {
        let img = SpectralImage::new("x", 1, 2, 2, vec![0.1, 0.2, 0.3, 2.5]).unwrap();
        assert!(img.is_suspicious());
        assert_eq!(img.pixel(1), &[0.3, 2.5]);
        assert!(SpectralImage::new("x", 1, 1, 2, vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn field_pixel_view_matches_columns() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let f = EndmemberField::shared(&m, 3).unwrap();
        assert_eq!(f.pixel(2).into_owned(), m);
        assert_eq!(f.signature(1, 1), &[2.0, 4.0]);
        let swapped = f.permuted(&[1, 0]);
        assert_eq!(swapped.signature(0, 0), &[2.0, 4.0]);
    }
}
