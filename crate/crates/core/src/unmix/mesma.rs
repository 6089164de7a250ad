use web_time::Instant;

use nalgebra::DMatrix;

use super::fcls::SimplexLs;
use super::{per_pixel_re, reflectance_field, Algorithm, SolverLog, SolverOptions, UnmixingResult};
use crate::error::{dim_err, Error, Result};
use crate::par;
use crate::spectra::{AbundanceMap, SpectralImage, SpectralLibrary};

/// Mixed-radix decoding of a model index; the last class varies fastest.
fn decode(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, &s) in out.iter_mut().zip(sizes).rev() {
        *slot = index % s;
        index /= s;
    }
    out
}

pub(crate) fn model_count(sizes: &[usize]) -> u128 {
    sizes
        .iter()
        .try_fold(1u128, |acc, &s| acc.checked_mul(s as u128))
        .unwrap_or(u128::MAX)
}

fn model_matrix(library: &SpectralLibrary, tuple: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(library.bands(), tuple.len());
    for (p, (&j, class)) in tuple.iter().zip(library.classes()).enumerate() {
        m.set_column(p, &class.signatures.column(j));
    }
    m
}

struct Best {
    re: f64,
    model: usize,
    a: Vec<f64>,
    kkt: f64,
}

/// Multiple endmember spectral mixture analysis.
///
/// Every combination of one signature per class is tried on every pixel with
/// FCLS; the combination with the smallest reconstruction error wins, ties
/// going to the lexicographically smallest index tuple.
pub fn mesma(
    image: &SpectralImage,
    library: &SpectralLibrary,
    opts: &SolverOptions,
) -> Result<UnmixingResult> {
    let start = Instant::now();
    opts.validate()?;
    if library.bands() != image.bands() {
        return Err(dim_err(format!(
            "library has {} bands, image {}",
            library.bands(),
            image.bands()
        )));
    }
    let sizes = library.class_sizes();
    let count = model_count(&sizes);
    if count > opts.model_budget {
        return Err(Error::BudgetExceeded {
            what: "MESMA model",
            count,
            budget: opts.model_budget,
        });
    }
    let n = image.n_pixels();
    let l = image.bands() as f64;
    let settings = opts.qp_settings();
    let mut best: Vec<Option<Best>> = (0..n).map(|_| None).collect();
    let mut done = vec![false; n];
    let mut max_iters = 0;
    for model in 0..count as usize {
        if done.iter().all(|&d| d) {
            break;
        }
        let m = model_matrix(library, &decode(model, &sizes));
        let solver = SimplexLs::new(&m, opts.rho);
        let trial: Vec<Option<(f64, Vec<f64>, f64, usize)>> = par::map_range(n, |px| {
            if done[px] {
                return None;
            }
            let y = image.pixel(px);
            let sol = solver.solve(y, &settings);
            let fit = &m * &sol.x;
            let r: f64 = fit.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            Some(((r / l).sqrt(), sol.x.as_slice().to_vec(), sol.kkt, sol.iterations))
        });
        for (px, t) in trial.into_iter().enumerate() {
            let Some((re, a, kkt, its)) = t else { continue };
            max_iters = max_iters.max(its);
            if best[px].as_ref().is_none_or(|b| re < b.re) {
                best[px] = Some(Best { re, model, a, kkt });
            }
            if let (Some(th), Some(b)) = (opts.re_threshold, best[px].as_ref()) {
                if b.re < th {
                    done[px] = true;
                }
            }
        }
    }

    let p = sizes.len();
    let best: Vec<Best> = best.into_iter().map(|b| b.expect("at least one model")).collect();
    let mut a = DMatrix::zeros(p, n);
    let mut mats = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    let mut reconstruction = DMatrix::zeros(image.bands(), n);
    let mut max_kkt: f64 = 0.0;
    for (px, b) in best.iter().enumerate() {
        let tuple = decode(b.model, &sizes);
        let m = model_matrix(library, &tuple);
        for (i, v) in b.a.iter().enumerate() {
            a[(i, px)] = *v;
        }
        reconstruction.set_column(px, &(&m * a.column(px)));
        mats.push(m);
        selected.push(tuple);
        max_kkt = max_kkt.max(b.kkt);
    }
    let re = per_pixel_re(image, &reconstruction);
    let cost = re.iter().map(|r| r * r * l).sum();
    let mut notes = vec![format!("{count} models enumerated")];
    if let Some(th) = opts.re_threshold {
        notes.push(format!("early stop at RE < {th}"));
    }
    Ok(UnmixingResult {
        algorithm: Algorithm::Mesma,
        abundances: AbundanceMap::from_columns(a, true)?.with_class_names(library.class_names())?,
        endmembers: reflectance_field(&mats)?,
        selected_model: Some(selected),
        per_pixel_re: re,
        reconstruction,
        library_abundances: None,
        scaling: None,
        uniform_rows: Vec::new(),
        log: SolverLog {
            algorithm: Algorithm::Mesma.name().into(),
            iterations: max_iters,
            final_cost: cost,
            converged: true,
            wall_time_s: start.elapsed().as_secs_f64(),
            cost_history: vec![cost],
            max_kkt,
            notes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unmix::fcls;

    fn lib() -> SpectralLibrary {
        SpectralLibrary::new(
            4,
            vec![
                (
                    "a".into(),
                    vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.15, 0.22, 0.35, 0.5]],
                ),
                (
                    "b".into(),
                    vec![vec![0.6, 0.4, 0.2, 0.1], vec![0.5, 0.45, 0.3, 0.05]],
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn decode_is_lexicographic() {
        let sizes = [2, 3];
        let tuples: Vec<_> = (0..6).map(|i| decode(i, &sizes)).collect();
        assert_eq!(tuples[0], vec![0, 0]);
        assert_eq!(tuples[1], vec![0, 1]);
        assert_eq!(tuples[3], vec![1, 0]);
        assert_eq!(tuples[5], vec![1, 2]);
    }

    #[test]
    fn selects_generating_model() {
        let lib = lib();
        // 0.3 * (class a, sig 1) + 0.7 * (class b, sig 0)
        let a1 = lib.classes()[0].signatures.column(1).into_owned();
        let b0 = lib.classes()[1].signatures.column(0).into_owned();
        let y = a1 * 0.3 + b0 * 0.7;
        let img = SpectralImage::new("t", 1, 1, 4, y.as_slice().to_vec()).unwrap();
        let r = mesma(&img, &lib, &SolverOptions::default()).unwrap();
        assert_eq!(r.selected_model.as_ref().unwrap()[0], vec![1, 0]);
        let a = r.abundances.pixel(0);
        assert!((a[0] - 0.3).abs() < 1e-10 && (a[1] - 0.7).abs() < 1e-10);
        assert!(r.per_pixel_re[0] < 1e-10);
    }

    #[test]
    fn single_model_equals_fcls() {
        let m = DMatrix::from_row_slice(3, 2, &[0.1, 0.5, 0.2, 0.4, 0.3, 0.3]);
        let lib = SpectralLibrary::from_matrix(&m, None).unwrap();
        let img = SpectralImage::new("t", 1, 2, 3, vec![0.2, 0.3, 0.3, 0.5, 0.1, 0.0]).unwrap();
        let a = mesma(&img, &lib, &SolverOptions::default()).unwrap();
        let b = fcls(&img, &m, &SolverOptions::default()).unwrap();
        assert_eq!(a.abundances.matrix(), b.abundances.matrix());
    }

    #[test]
    fn budget_is_enforced() {
        let opts = SolverOptions {
            model_budget: 3,
            ..Default::default()
        };
        let img = SpectralImage::new("t", 1, 1, 4, vec![0.3; 4]).unwrap();
        assert!(matches!(
            mesma(&img, &lib(), &opts),
            Err(Error::BudgetExceeded { count: 4, .. })
        ));
    }

    #[test]
    fn early_stop_keeps_first_good_model() {
        let lib = lib();
        let a0 = lib.classes()[0].signatures.column(0).into_owned();
        let img = SpectralImage::new("t", 1, 1, 4, a0.as_slice().to_vec()).unwrap();
        let opts = SolverOptions {
            re_threshold: Some(1e-6),
            ..Default::default()
        };
        let r = mesma(&img, &lib, &opts).unwrap();
        assert_eq!(r.selected_model.unwrap()[0], vec![0, 0]);
    }
}
