use nalgebra::DMatrix;

use super::transform::SpectralTransform;
use crate::error::{param_err, Error, Result};
use crate::linalg::{leading_eigen, mean_and_covariance};
use crate::spectra::SpectralLibrary;

fn scatter(library: &SpectralLibrary) -> (DMatrix<f64>, DMatrix<f64>) {
    let l = library.bands();
    let mut s_w = DMatrix::zeros(l, l);
    let mut total = 0usize;
    for class in library.classes() {
        let (_, cov) = mean_and_covariance(&class.signatures);
        let n = class.signatures.ncols();
        s_w += cov * n as f64;
        total += n;
    }
    s_w /= total as f64;
    let (_, s_b) = mean_and_covariance(&library.class_means());
    (s_w, s_b)
}

/// Fisher discriminant projection to `d` dimensions: the leading
/// generalised eigenvectors of (between-class, within-class) scatter, the
/// within-class scatter loaded with `1e-8 trace / L` (between-class trace if
/// the within-class one vanishes).
pub fn fda_transform(library: &SpectralLibrary, d: usize) -> Result<SpectralTransform> {
    let p = library.n_classes();
    let l = library.bands();
    if p < 2 {
        return Err(param_err("discriminant analysis needs at least two classes"));
    }
    if d == 0 || d > p - 1 || d > l {
        return Err(Error::Rank(format!(
            "dimension {d} outside 1..={}",
            (p - 1).min(l)
        )));
    }
    let (mut s_w, s_b) = scatter(library);
    let tr_b = s_b.trace();
    let (_, vals_b) = leading_eigen(s_b.clone(), 0);
    let rank_b = vals_b
        .iter()
        .filter(|&&v| v > 1e-12 * tr_b.max(f64::MIN_POSITIVE))
        .count();
    if tr_b <= 0.0 || rank_b < d {
        return Err(Error::Rank(format!(
            "between-class scatter has rank {rank_b}, {d} directions requested"
        )));
    }
    let tr_w = s_w.trace();
    let eps = 1e-8 * if tr_w > 0.0 { tr_w } else { tr_b } / l as f64;
    for i in 0..l {
        s_w[(i, i)] += eps;
    }
    let chol = s_w
        .cholesky()
        .ok_or_else(|| Error::Rank("within-class scatter not positive definite".into()))?;
    let lower = chol.l();
    // C = L^-1 S_b L^-T
    let inv_sb = lower
        .solve_lower_triangular(&s_b)
        .ok_or_else(|| Error::Rank("singular factor".into()))?;
    let c = lower
        .solve_lower_triangular(&inv_sb.transpose())
        .ok_or_else(|| Error::Rank("singular factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let (v, _) = leading_eigen(c, d);
    let w = lower
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or_else(|| Error::Rank("singular factor".into()))?;
    let mut rows = w.transpose();
    for mut row in rows.row_iter_mut() {
        let (imax, _) =
            row.iter().enumerate().fold(
                (0, 0.0),
                |acc, (i, v)| {
                    if v.abs() > acc.1 {
                        (i, v.abs())
                    } else {
                        acc
                    }
                },
            );
        if row[imax] < 0.0 {
            row.neg_mut();
        }
    }
    SpectralTransform::dense(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::libops::TransformWeights;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_library(seed: u64) -> SpectralLibrary {
        let mut rng = substream(seed, 0, 0);
        let centres = [[1.0, 0.2, 0.5, 0.3], [0.4, 0.9, 0.5, 0.1], [0.6, 0.6, 0.9, 0.5]];
        // anisotropic spread: large along band 2
        let spread = [0.05, 0.05, 0.3, 0.1];
        let classes = centres
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let sigs = (0..15)
                    .map(|_| {
                        (0..4)
                            .map(|b| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                (c[b] + spread[b] * z).abs()
                            })
                            .collect()
                    })
                    .collect();
                (format!("c{i}"), sigs)
            })
            .collect();
        SpectralLibrary::new(4, classes).unwrap()
    }

    fn dense(t: &SpectralTransform) -> DMatrix<f64> {
        match t.kind() {
            TransformWeights::Dense(m) => m.clone(),
            _ => panic!("expected dense"),
        }
    }

    fn criterion(w: &DMatrix<f64>, s_b: &DMatrix<f64>, s_w: &DMatrix<f64>) -> f64 {
        let b = w * s_b * w.transpose();
        let ww = w * s_w * w.transpose();
        (ww.try_inverse().unwrap() * b).trace()
    }

    #[test]
    fn beats_random_projections() {
        let lib = gaussian_library(1);
        let (s_w, s_b) = scatter(&lib);
        let mut rng = substream(2, 0, 0);
        for d in [1, 2] {
            let w = dense(&fda_transform(&lib, d).unwrap());
            let best = criterion(&w, &s_b, &s_w);
            for _ in 0..100 {
                let r = DMatrix::from_fn(d, 4, |_, _| StandardNormal.sample(&mut rng));
                assert!(best >= criterion(&r, &s_b, &s_w) - 1e-9);
            }
        }
    }

    #[test]
    fn point_mass_classes_separate() {
        let lib = SpectralLibrary::new(
            3,
            vec![
                ("a".into(), vec![vec![1.0, 0.2, 0.3]; 3]),
                ("b".into(), vec![vec![0.2, 0.9, 0.4]; 2]),
            ],
        )
        .unwrap();
        let t = fda_transform(&lib, 1).unwrap();
        let proj = t.apply_columns(&lib.flatten().0).unwrap();
        assert!((proj[0] - proj[1]).abs() < 1e-12 && (proj[0] - proj[2]).abs() < 1e-12);
        assert!((proj[3] - proj[4]).abs() < 1e-12);
        assert!((proj[0] - proj[3]).abs() > 1e-6);
    }

    #[test]
    fn identical_means_and_bad_dimension_error() {
        let lib = SpectralLibrary::new(
            2,
            vec![
                ("a".into(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
                ("b".into(), vec![vec![0.5, 0.5]]),
            ],
        )
        .unwrap();
        assert!(matches!(fda_transform(&lib, 1), Err(Error::Rank(_))));
        let lib = gaussian_library(3);
        assert!(matches!(fda_transform(&lib, 3), Err(Error::Rank(_))));
    }
}
