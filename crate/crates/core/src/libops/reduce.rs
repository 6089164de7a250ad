use nalgebra::{DMatrix, DVectorView};

use crate::error::{dim_err, param_err, Result};
use crate::linalg::{leading_eigen, mean_and_covariance};
use crate::spectra::{spectral_angle, LibraryClass, SpectralImage, SpectralLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoverageMetric {
    /// Spectral angle in radians.
    #[default]
    SpectralAngle,
    /// Mean squared difference per band.
    SquaredError,
}

fn distance(a: &[f64], b: &[f64], metric: CoverageMetric) -> f64 {
    if a == b {
        return 0.0;
    }
    match metric {
        CoverageMetric::SpectralAngle => spectral_angle(a, b).unwrap_or(f64::INFINITY),
        CoverageMetric::SquaredError => {
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
        }
    }
}

fn keep_columns(class: &LibraryClass, keep: &[usize]) -> LibraryClass {
    LibraryClass {
        name: class.name.clone(),
        signatures: class.signatures.select_columns(keep.iter()),
    }
}

/// Greedy set cover per class: repeatedly keep the signature within
/// `threshold` of the most still-uncovered signatures (lower index on ties),
/// until all are covered or `target_per_class` are kept. Kept signatures
/// stay in their original order.
pub fn count_based_reduce(
    library: &SpectralLibrary,
    threshold: f64,
    target_per_class: usize,
    metric: CoverageMetric,
) -> Result<SpectralLibrary> {
    if !(threshold >= 0.0) {
        return Err(param_err("coverage threshold must be nonnegative"));
    }
    if target_per_class == 0 {
        return Err(param_err("target_per_class must be at least 1"));
    }
    let classes = library
        .classes()
        .iter()
        .map(|class| {
            let s = &class.signatures;
            let m = s.ncols();
            let covers: Vec<Vec<bool>> = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| {
                            distance(s.column(i).as_slice(), s.column(j).as_slice(), metric) <= threshold
                        })
                        .collect()
                })
                .collect();
            let mut covered = vec![false; m];
            let mut kept = Vec::new();
            while kept.len() < target_per_class && covered.contains(&false) {
                let mut best = (usize::MAX, 0usize);
                for i in (0..m).filter(|i| !kept.contains(i)) {
                    let gain = (0..m).filter(|&j| covers[i][j] && !covered[j]).count();
                    if gain > best.1 {
                        best = (i, gain);
                    }
                }
                if best.0 == usize::MAX {
                    break;
                }
                kept.push(best.0);
                for (c, &hit) in covered.iter_mut().zip(&covers[best.0]) {
                    *c |= hit;
                }
            }
            kept.sort_unstable();
            keep_columns(class, &kept)
        })
        .collect();
    SpectralLibrary::from_classes(library.bands(), classes)
}

/// Residual of every library signature (per class) against the leading
/// `subspace_dim`-dimensional principal subspace `U` of the mean-removed
/// image: `|(I - U U^T)(m - mean)| / |m - mean|`, in `[0, 1]`. Directions
/// with numerically zero variance are left out of `U`.
pub fn music_residuals(
    library: &SpectralLibrary,
    image: &SpectralImage,
    subspace_dim: usize,
) -> Result<Vec<Vec<f64>>> {
    let (l, n) = (image.bands(), image.n_pixels());
    if n == 0 {
        return Err(param_err("empty image"));
    }
    if library.bands() != l {
        return Err(dim_err("image and library band counts differ"));
    }
    if subspace_dim == 0 || subspace_dim > l.min(n) {
        return Err(param_err(format!(
            "subspace_dim {subspace_dim} outside 1..={}",
            l.min(n)
        )));
    }
    let (mean, cov) = mean_and_covariance(image.matrix());
    let (u, vals) = leading_eigen(cov, subspace_dim);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let rank = vals[..subspace_dim]
        .iter()
        .filter(|&&v| v > 1e-12 * top && v > 0.0)
        .count();
    if rank < subspace_dim {
        log::info!("image subspace has rank {rank}; using {rank} of {subspace_dim} directions");
    }
    let u: DMatrix<f64> = u.columns(0, rank).into_owned();
    let residual = |sig: DVectorView<f64>| -> f64 {
        let d = sig - &mean;
        let nd = d.norm();
        if nd == 0.0 {
            return 0.0;
        }
        (&d - &u * (u.transpose() * &d)).norm() / nd
    };
    Ok(library
        .classes()
        .iter()
        .map(|class| class.signatures.column_iter().map(residual).collect())
        .collect())
}

/// Drops signatures whose [`music_residuals`] value exceeds
/// `residual_threshold`. A class never loses its last signature; the one
/// with the smallest residual is kept instead.
pub fn music_prune(
    library: &SpectralLibrary,
    image: &SpectralImage,
    subspace_dim: usize,
    residual_threshold: f64,
) -> Result<SpectralLibrary> {
    if !(residual_threshold > 0.0) {
        return Err(param_err("residual threshold must be positive"));
    }
    let residuals = music_residuals(library, image, subspace_dim)?;
    let classes = library
        .classes()
        .iter()
        .zip(residuals)
        .map(|(class, res)| {
            let mut keep: Vec<usize> = (0..res.len()).filter(|&j| res[j] <= residual_threshold).collect();
            if keep.is_empty() {
                let best = (0..res.len())
                    .min_by(|&a, &b| res[a].total_cmp(&res[b]))
                    .unwrap_or(0);
                log::warn!(
                    "pruning would empty class `{}`; keeping its closest signature",
                    class.name
                );
                keep.push(best);
            }
            keep_columns(class, &keep)
        })
        .collect();
    SpectralLibrary::from_classes(library.bands(), classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::mix_shared;
    use crate::synth::{builtin_library, sample_abundances_dirichlet};

    fn two_cluster_class() -> SpectralLibrary {
        // two tight angular clusters: around (1, 0.2, 0.1) and (0.1, 0.3, 1)
        SpectralLibrary::new(
            3,
            vec![(
                "x".into(),
                vec![
                    vec![1.0, 0.2, 0.1],
                    vec![0.1, 0.3, 1.0],
                    vec![1.0, 0.21, 0.1],
                    vec![0.1, 0.3, 1.02],
                    vec![0.98, 0.2, 0.11],
                ],
            )],
        )
        .unwrap()
    }

    /// Smallest cover by brute force over all subsets.
    fn min_cover(lib: &SpectralLibrary, thr: f64) -> usize {
        let s = &lib.classes()[0].signatures;
        let m = s.ncols();
        (1u32..(1 << m))
            .filter(|mask| {
                (0..m).all(|j| {
                    (0..m).any(|i| {
                        mask & (1 << i) != 0
                            && spectral_angle(s.column(i).as_slice(), s.column(j).as_slice()).unwrap() <= thr
                    })
                })
            })
            .map(|mask| mask.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn two_clusters_reduce_to_one_each() {
        let lib = two_cluster_class();
        let thr = 0.1;
        assert_eq!(min_cover(&lib, thr), 2);
        let r = count_based_reduce(&lib, thr, 5, CoverageMetric::SpectralAngle).unwrap();
        let kept = &r.classes()[0].signatures;
        assert_eq!(kept.ncols(), 2);
        assert!(kept[(0, 0)] > 0.5 && kept[(2, 1)] > 0.5);
    }

    #[test]
    fn duplicates_collapse_and_zero_threshold_keeps_distinct() {
        let lib = SpectralLibrary::new(2, vec![("a".into(), vec![vec![0.3, 0.4]; 4])]).unwrap();
        let r = count_based_reduce(&lib, 0.05, 3, CoverageMetric::SpectralAngle).unwrap();
        assert_eq!(r.class_sizes(), vec![1]);
        let lib = two_cluster_class();
        let r = count_based_reduce(&lib, 0.0, 10, CoverageMetric::SpectralAngle).unwrap();
        assert_eq!(r.class_sizes(), vec![5]);
        let r = count_based_reduce(&lib, 0.0, 3, CoverageMetric::SquaredError).unwrap();
        assert_eq!(r.class_sizes(), vec![3]);
    }

    fn scene() -> (SpectralImage, DMatrix<f64>) {
        let m = builtin_library(30).unwrap().first_signatures();
        let a = sample_abundances_dirichlet(200, &[1.0; 3], 0.0, 2).unwrap();
        (mix_shared(&m, &a, 10, 20).unwrap(), m)
    }

    /// Nonnegative direction orthogonal to the image's affine span, by
    /// Gram-Schmidt against the centred endmembers.
    fn orthogonal_signature(img: &SpectralImage, m: &DMatrix<f64>) -> Vec<f64> {
        let mean = img.matrix().column_mean();
        let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
        for j in 0..m.ncols() {
            let mut v = m.column(j) - &mean;
            for b in &basis {
                v -= b * b.dot(&v);
            }
            if v.norm() > 1e-12 {
                basis.push(v.normalize());
            }
        }
        let mut o = nalgebra::DVector::from_fn(m.nrows(), |i, _| ((i * 7 % 5) as f64) - 2.0);
        for b in &basis {
            o -= b * b.dot(&o);
        }
        let o = o.normalize();
        let t = (0..o.len())
            .filter(|&i| o[i] < 0.0)
            .map(|i| mean[i] / -o[i])
            .fold(f64::INFINITY, f64::min)
            * 0.5;
        (&mean + o * t).iter().copied().collect()
    }

    #[test]
    fn music_keeps_endmembers_and_drops_orthogonal() {
        let (img, m) = scene();
        let orth = orthogonal_signature(&img, &m);
        let mut classes: Vec<(String, Vec<Vec<f64>>)> = (0..3)
            .map(|p| (format!("c{p}"), vec![m.column(p).iter().copied().collect()]))
            .collect();
        classes[0].1.push(orth);
        let lib = SpectralLibrary::new(30, classes).unwrap();
        let res: Vec<f64> = music_residuals(&lib, &img, 3).unwrap().concat();
        assert!(res[0] < 0.01 && res[2] < 0.01 && res[3] < 0.01, "{res:?}");
        assert!((res[1] - 1.0).abs() < 1e-9, "{res:?}");
        let pruned = music_prune(&lib, &img, 3, 0.5).unwrap();
        assert_eq!(pruned.class_sizes(), vec![1, 1, 1]);
        assert_eq!(
            pruned.classes()[0].signatures,
            lib.classes()[0].signatures.columns(0, 1)
        );
        let all = music_prune(&lib, &img, 3, 1.0 + 1e-9).unwrap();
        assert_eq!(all, lib);
    }

    #[test]
    fn music_never_empties_a_class() {
        let (img, m) = scene();
        let orth = orthogonal_signature(&img, &m);
        let lib = SpectralLibrary::new(
            30,
            vec![
                ("a".into(), vec![orth]),
                ("b".into(), vec![m.column(1).iter().copied().collect()]),
            ],
        )
        .unwrap();
        let pruned = music_prune(&lib, &img, 2, 0.5).unwrap();
        assert_eq!(pruned.class_sizes(), vec![1, 1]);
        assert!(music_prune(&lib, &img, 0, 0.5).is_err());
    }
}
