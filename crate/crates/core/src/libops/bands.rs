use crate::error::{param_err, Result};
use crate::spectra::SpectralLibrary;

use super::transform::SpectralTransform;

/// Per band: mean within-class variance over the variance of the class
/// means (population variances). `+inf` where the class means coincide.
pub fn instability_index(library: &SpectralLibrary) -> Result<Vec<f64>> {
    let p = library.n_classes();
    if p < 2 {
        return Err(param_err("instability index needs at least two classes"));
    }
    let means = library.class_means();
    let index = (0..library.bands())
        .map(|b| {
            let within = library
                .classes()
                .iter()
                .enumerate()
                .map(|(c, class)| {
                    let row = class.signatures.row(b);
                    row.iter().map(|v| (v - means[(b, c)]).powi(2)).sum::<f64>() / row.len() as f64
                })
                .sum::<f64>()
                / p as f64;
            let row = means.row(b);
            let grand = row.sum() / p as f64;
            let between = row.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / p as f64;
            if between > 0.0 {
                within / between
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandSelection {
    /// The `k` most stable bands.
    Count(usize),
    /// Every band whose index is at most this value.
    Threshold(f64),
}

/// Band mask from the instability index; ties go to the lower band.
pub fn select_stable_bands(library: &SpectralLibrary, sel: BandSelection) -> Result<SpectralTransform> {
    let index = instability_index(library)?;
    let l = index.len();
    let mut mask = vec![false; l];
    match sel {
        BandSelection::Count(k) => {
            if k == 0 || k > l {
                return Err(param_err(format!("cannot keep {k} of {l} bands")));
            }
            let mut order: Vec<usize> = (0..l).collect();
            order.sort_by(|&a, &b| index[a].total_cmp(&index[b]).then(a.cmp(&b)));
            for &b in &order[..k] {
                mask[b] = true;
            }
        }
        BandSelection::Threshold(t) => {
            if t.is_nan() {
                return Err(param_err("threshold is NaN"));
            }
            for (m, v) in mask.iter_mut().zip(&index) {
                *m = *v <= t;
            }
        }
    }
    let kept = mask.iter().filter(|&&k| k).count();
    if kept < library.n_classes() {
        log::warn!(
            "{kept} stable bands for {} classes; unmixing is underdetermined",
            library.n_classes()
        );
    }
    SpectralTransform::mask(mask)
}

/// Band weights `1 / (1 + index)`; bands with `+inf` index get weight 0.
pub fn stability_weights(library: &SpectralLibrary) -> Result<SpectralTransform> {
    let w = instability_index(library)?
        .into_iter()
        .map(|v| if v.is_finite() { 1.0 / (1.0 + v) } else { 0.0 })
        .collect();
    SpectralTransform::weights(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lib(classes: Vec<Vec<Vec<f64>>>) -> SpectralLibrary {
        let l = classes[0][0].len();
        SpectralLibrary::new(
            l,
            classes
                .into_iter()
                .enumerate()
                .map(|(i, c)| (format!("c{i}"), c))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_ratio() {
        let l = lib(vec![
            vec![vec![1.0, 2.0, 0.5], vec![3.0, 2.0, 0.7]],
            vec![vec![5.0, 4.0, 0.5], vec![5.0, 0.0, 0.9]],
        ]);
        let idx = instability_index(&l).unwrap();
        // band 0: within (1 + 0)/2 = 0.5, means 2 and 5 -> between 2.25
        assert!((idx[0] - 0.5 / 2.25).abs() < 1e-15);
        // band 1: within (0 + 4)/2 = 2, means 2 and 2 -> inf
        assert_eq!(idx[1], f64::INFINITY);
        // band 2: within (0.01 + 0.04)/2 = 0.025, means 0.6, 0.7 -> 0.0025
        assert!((idx[2] - 0.025 / 0.0025).abs() < 1e-9);
    }

    #[test]
    fn weights_follow_index() {
        let l = lib(vec![
            vec![vec![1.0, 2.0], vec![3.0, 2.0]],
            vec![vec![5.0, 4.0], vec![5.0, 0.0]],
        ]);
        let t = stability_weights(&l).unwrap();
        match t.kind() {
            crate::libops::TransformWeights::Diagonal(w) => {
                assert!((w[0] - 1.0 / (1.0 + 0.5 / 2.25)).abs() < 1e-15);
                assert_eq!(w[1], 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicates_give_zero() {
        let l = lib(vec![vec![vec![1.0, 2.0]; 3], vec![vec![2.0, 0.5]; 2]]);
        assert_eq!(instability_index(&l).unwrap(), vec![0.0, 0.0]);
        assert!(instability_index(&lib(vec![vec![vec![1.0]]])).is_err());
    }

    #[test]
    fn stable_band_chosen_first_and_full_count_is_identity() {
        let l = lib(vec![
            vec![vec![1.0, 0.2, 3.0], vec![2.0, 0.2, 1.0]],
            vec![vec![4.0, 0.9, 2.0], vec![6.0, 0.9, 5.0]],
        ]);
        let t = select_stable_bands(&l, BandSelection::Count(1)).unwrap();
        assert_eq!(t.kept_bands().unwrap(), vec![1]);
        let t = select_stable_bands(&l, BandSelection::Count(3)).unwrap();
        assert_eq!(t, SpectralTransform::identity(3));
    }

    #[test]
    fn median_threshold_keeps_half() {
        let mut rng = crate::rng::substream(3, 0, 0);
        use rand::Rng;
        for l in [9usize, 10] {
            let classes: Vec<Vec<Vec<f64>>> = (0..3)
                .map(|_| {
                    (0..4)
                        .map(|_| (0..l).map(|_| rng.random::<f64>()).collect())
                        .collect()
                })
                .collect();
            let lb = lib(classes);
            let mut idx = instability_index(&lb).unwrap();
            idx.sort_by(f64::total_cmp);
            let median = if l % 2 == 1 {
                idx[l / 2]
            } else {
                0.5 * (idx[l / 2 - 1] + idx[l / 2])
            };
            let kept = select_stable_bands(&lb, BandSelection::Threshold(median))
                .unwrap()
                .output_bands();
            assert!(kept == l / 2 || kept == l.div_ceil(2), "{l}: {kept}");
        }
    }

    proptest! {
        #[test]
        fn masks_are_nested(vals in proptest::collection::vec(0.0f64..1.0, 24), k1 in 1usize..7, extra in 0usize..6) {
            let classes: Vec<Vec<Vec<f64>>> = vals.chunks(6).map(|c| vec![c[..3].to_vec(), c[3..].to_vec()]).collect();
            let lb = lib(classes);
            let small = select_stable_bands(&lb, BandSelection::Count(k1.min(3))).unwrap().kept_bands().unwrap();
            let big = select_stable_bands(&lb, BandSelection::Count((k1 + extra).min(3))).unwrap().kept_bands().unwrap();
            prop_assert!(small.iter().all(|b| big.contains(b)));
        }
    }
}
