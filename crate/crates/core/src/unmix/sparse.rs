use web_time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fcls::SimplexLs;
use super::qp::{BoxedQp, Constraint, QpSettings};
use super::{per_pixel_re, reflectance_field, Algorithm, SolverLog, SolverOptions, UnmixingResult};
use crate::error::{dim_err, param_err, Error, Result};
use crate::par;
use crate::spectra::{AbundanceMap, EndmemberField, SpectralImage, SpectralLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L0Mode {
    #[default]
    Greedy,
    Exhaustive,
}

/// Largest KKT violation of `min 1/2||y - Ma||^2 + lambda 1'a, a >= 0` at `a`.
pub fn nonnegative_lasso_kkt(m: &DMatrix<f64>, y: &[f64], a: &[f64], lambda: f64) -> f64 {
    let a = DVector::from_column_slice(a);
    let y = DVector::from_column_slice(y);
    let grad = m.tr_mul(&(m * &a - y));
    let mut worst: f64 = a.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
    for (ai, gi) in a.iter().zip(grad.iter()) {
        let g = gi + lambda;
        worst = worst.max(if *ai > 0.0 { g.abs() } else { (-g).max(0.0) });
    }
    worst
}

struct Collapsed {
    abundances: AbundanceMap,
    endmembers: Option<EndmemberField>,
    uniform: Vec<usize>,
}

/// Sums column abundances within classes and builds the per-pixel endmember
/// proxy (abundance-weighted class mean).
fn collapse(library: &SpectralLibrary, class_of: &[usize], raw: &DMatrix<f64>) -> Result<Collapsed> {
    let p = library.n_classes();
    let n = raw.ncols();
    let l = library.bands();
    let plain_means = library.class_means();
    let (flat, _) = library.flatten();
    let mut a = DMatrix::zeros(p, n);
    let mut mats = Vec::with_capacity(n);
    let mut uniform = Vec::new();
    for px in 0..n {
        let col = raw.column(px);
        let mut mass = vec![0.0; p];
        let mut m = DMatrix::zeros(l, p);
        for (j, &c) in class_of.iter().enumerate() {
            if col[j] > 0.0 {
                mass[c] += col[j];
                m.column_mut(c).axpy(col[j], &flat.column(j), 1.0);
            }
        }
        for c in 0..p {
            if mass[c] > 0.0 {
                let w = mass[c];
                m.column_mut(c).unscale_mut(w);
            } else {
                m.set_column(c, &plain_means.column(c));
            }
        }
        let total: f64 = mass.iter().sum();
        if total > 1e-9 {
            for c in 0..p {
                a[(c, px)] = mass[c] / total;
            }
        } else {
            uniform.push(px);
            for c in 0..p {
                a[(c, px)] = 1.0 / p as f64;
            }
        }
        mats.push(m);
    }
    Ok(Collapsed {
        abundances: AbundanceMap::from_columns(a, true)?.with_class_names(library.class_names())?,
        endmembers: reflectance_field(&mats)?,
        uniform,
    })
}

fn check_library(image: &SpectralImage, library: &SpectralLibrary) -> Result<()> {
    if library.bands() != image.bands() {
        return Err(dim_err(format!(
            "library has {} bands, image {}",
            library.bands(),
            image.bands()
        )));
    }
    Ok(())
}

/// Nonnegative L1-regularised sparse regression over the flattened library.
///
/// Solves `min 1/2||y - M a||^2 + lambda 1'a` with `a >= 0` per pixel. The
/// raw column abundances carry no sum-to-one constraint; the class-collapsed
/// map is row-normalised.
pub fn sparse_su_l1(
    image: &SpectralImage,
    library: &SpectralLibrary,
    opts: &SolverOptions,
) -> Result<UnmixingResult> {
    let start = Instant::now();
    opts.validate()?;
    check_library(image, library)?;
    let lambda = opts.lambda_sparse;
    let (m, class_of) = library.flatten();
    let qp = BoxedQp::new(m.transpose() * &m, Constraint::Nonnegative, opts.rho);
    let settings = QpSettings {
        tol: opts.sparse_tol,
        ..opts.qp_settings()
    };
    let sols = par::map_range(image.n_pixels(), |n| {
        let mut c = m.tr_mul(&DVector::from_column_slice(image.pixel(n)));
        c.add_scalar_mut(-lambda);
        qp.solve(&c, &settings)
    });
    let k = m.ncols();
    let mut raw = DMatrix::zeros(k, image.n_pixels());
    let mut max_kkt: f64 = 0.0;
    let mut iterations = 0;
    for (n, s) in sols.iter().enumerate() {
        raw.set_column(n, &s.x);
        max_kkt = max_kkt.max(s.kkt);
        iterations = iterations.max(s.iterations);
    }
    let reconstruction = &m * &raw;
    let re = per_pixel_re(image, &reconstruction);
    let cost: f64 = re
        .iter()
        .zip(raw.column_iter())
        .map(|(r, a)| 0.5 * r * r * image.bands() as f64 + lambda * a.sum())
        .sum();
    let collapsed = collapse(library, &class_of, &raw)?;
    let mut notes = vec!["class abundances are row-normalised sums of column abundances".to_string()];
    if !collapsed.uniform.is_empty() {
        notes.push(format!(
            "{} pixels had ~zero mass and were reported uniform",
            collapsed.uniform.len()
        ));
    }
    Ok(UnmixingResult {
        algorithm: Algorithm::SparseL1,
        abundances: collapsed.abundances,
        endmembers: collapsed.endmembers,
        selected_model: None,
        per_pixel_re: re,
        reconstruction,
        library_abundances: Some(AbundanceMap::from_columns(raw, false)?),
        scaling: None,
        uniform_rows: collapsed.uniform,
        log: SolverLog {
            algorithm: Algorithm::SparseL1.name().into(),
            iterations,
            final_cost: cost,
            converged: max_kkt <= 1e-5 * (1.0 + m.amax()),
            wall_time_s: start.elapsed().as_secs_f64(),
            cost_history: vec![cost],
            max_kkt,
            notes,
        },
    })
}

/// Calls `f` on every k-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn columns(m: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), support.len(), |r, c| m[(r, support[c])])
}

fn greedy_pixel(
    m: &DMatrix<f64>,
    norms: &[f64],
    y: &[f64],
    k: usize,
    opts: &SolverOptions,
) -> (Vec<usize>, Vec<f64>) {
    let yv = DVector::from_column_slice(y);
    let settings = opts.qp_settings();
    let mut support: Vec<usize> = Vec::new();
    let mut residual = yv.clone();
    for _ in 0..k {
        let corr = m.tr_mul(&residual);
        let pick = (0..m.ncols())
            .filter(|j| !support.contains(j))
            .map(|j| (j, corr[j] / norms[j]))
            .fold(None::<(usize, f64)>, |acc, (j, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            });
        let Some((j, v)) = pick else { break };
        if v <= 0.0 && !support.is_empty() {
            break;
        }
        support.push(j);
        let sub = columns(m, &support);
        let qp = BoxedQp::new(sub.transpose() * &sub, Constraint::Nonnegative, opts.rho);
        let a = qp.solve(&sub.tr_mul(&yv), &settings).x;
        residual = &yv - &sub * a;
    }
    support.sort_unstable();
    let sub = columns(m, &support);
    let a = SimplexLs::new(&sub, opts.rho).solve(y, &settings).x;
    (support, a.as_slice().to_vec())
}

/// Sparse unmixing with at most `opts.max_nonzeros` active library columns.
///
/// `Greedy` runs a matching-pursuit forward selection with nonnegative refits
/// and a final simplex-constrained refit on the chosen support. `Exhaustive`
/// tries every support up to that size with FCLS and keeps the smallest
/// reconstruction error.
pub fn sparse_su_l0(
    image: &SpectralImage,
    library: &SpectralLibrary,
    opts: &SolverOptions,
) -> Result<UnmixingResult> {
    let start = Instant::now();
    opts.validate()?;
    check_library(image, library)?;
    let (m, class_of) = library.flatten();
    let total = m.ncols();
    let k = opts.max_nonzeros;
    if k == 0 || k > total {
        return Err(param_err(format!("max_nonzeros must be in 1..={total}, got {k}")));
    }
    let n = image.n_pixels();
    let l = image.bands() as f64;
    let mut raw = DMatrix::zeros(total, n);
    match opts.l0_mode {
        L0Mode::Greedy => {
            let norms: Vec<f64> = m.column_iter().map(|c| c.norm().max(1e-300)).collect();
            let picks = par::map_range(n, |px| greedy_pixel(&m, &norms, image.pixel(px), k, opts));
            for (px, (support, a)) in picks.into_iter().enumerate() {
                for (j, v) in support.into_iter().zip(a) {
                    raw[(j, px)] = v;
                }
            }
        }
        L0Mode::Exhaustive => {
            let count: u128 = (1..=k).map(|s| binomial(total, s)).sum();
            if count > opts.support_budget {
                return Err(Error::BudgetExceeded {
                    what: "L0 support",
                    count,
                    budget: opts.support_budget,
                });
            }
            let settings = opts.qp_settings();
            let mut best: Vec<(f64, Vec<usize>, Vec<f64>)> = vec![(f64::INFINITY, Vec::new(), Vec::new()); n];
            for size in 1..=k {
                for_each_combination(total, size, |support| {
                    let sub = columns(&m, support);
                    let solver = SimplexLs::new(&sub, opts.rho);
                    let trial = par::map_range(n, |px| {
                        let y = image.pixel(px);
                        let a = solver.solve(y, &settings).x;
                        let fit = &sub * &a;
                        let r: f64 = fit.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
                        ((r / l).sqrt(), a)
                    });
                    for (px, (re, a)) in trial.into_iter().enumerate() {
                        if re < best[px].0 {
                            best[px] = (re, support.to_vec(), a.as_slice().to_vec());
                        }
                    }
                });
            }
            for (px, (_, support, a)) in best.into_iter().enumerate() {
                for (j, v) in support.into_iter().zip(a) {
                    raw[(j, px)] = v;
                }
            }
        }
    }
    let reconstruction = &m * &raw;
    let re = per_pixel_re(image, &reconstruction);
    let cost = re.iter().map(|r| r * r * l).sum();
    let collapsed = collapse(library, &class_of, &raw)?;
    Ok(UnmixingResult {
        algorithm: Algorithm::SparseL0,
        abundances: collapsed.abundances,
        endmembers: collapsed.endmembers,
        selected_model: None,
        per_pixel_re: re,
        reconstruction,
        library_abundances: Some(AbundanceMap::from_columns(raw, true)?),
        scaling: None,
        uniform_rows: collapsed.uniform,
        log: SolverLog {
            algorithm: Algorithm::SparseL0.name().into(),
            iterations: 1,
            final_cost: cost,
            converged: true,
            wall_time_s: start.elapsed().as_secs_f64(),
            cost_history: vec![cost],
            max_kkt: 0.0,
            notes: vec![format!("mode {:?}, at most {k} nonzeros", opts.l0_mode)],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn combinations_are_lexicographic_and_complete() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| seen.push(c.to_vec()));
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(binomial(8, 2), 28);
        assert_eq!(binomial(5, 5), 1);
    }

    fn random_library(seed: u64, bands: usize, per_class: &[usize]) -> SpectralLibrary {
        let mut rng = crate::rng::substream(seed, 1, 0);
        SpectralLibrary::new(
            bands,
            per_class
                .iter()
                .enumerate()
                .map(|(c, &k)| {
                    (
                        format!("c{c}"),
                        (0..k)
                            .map(|_| (0..bands).map(|_| rng.random::<f64>()).collect())
                            .collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn huge_lambda_gives_zero_vector() {
        let lib = random_library(3, 12, &[2, 2]);
        let (m, _) = lib.flatten();
        let y: Vec<f64> = (0..12).map(|b| 0.3 + 0.01 * b as f64).collect();
        let threshold = m.tr_mul(&DVector::from_column_slice(&y)).max();
        let img = SpectralImage::new("t", 1, 1, 12, y).unwrap();
        let opts = SolverOptions {
            lambda_sparse: threshold,
            ..Default::default()
        };
        let r = sparse_su_l1(&img, &lib, &opts).unwrap();
        let raw = r.library_abundances.unwrap();
        assert!(raw.pixel(0).iter().all(|&v| v == 0.0));
        assert_eq!(r.uniform_rows, vec![0]);
    }

    #[test]
    fn one_column_pixel_with_k1_selects_it() {
        let lib = random_library(5, 10, &[2, 2, 1]);
        let (m, _) = lib.flatten();
        let y: Vec<f64> = m.column(3).iter().copied().collect();
        let img = SpectralImage::new("t", 1, 1, 10, y).unwrap();
        for mode in [L0Mode::Greedy, L0Mode::Exhaustive] {
            let opts = SolverOptions {
                max_nonzeros: 1,
                l0_mode: mode,
                ..Default::default()
            };
            let r = sparse_su_l0(&img, &lib, &opts).unwrap();
            let raw = r.library_abundances.unwrap();
            assert!((raw.pixel(0)[3] - 1.0).abs() < 1e-12, "{mode:?}");
            assert!((r.abundances.pixel(0)[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_budget_is_enforced() {
        let lib = random_library(5, 10, &[4, 4]);
        let img = SpectralImage::new("t", 1, 1, 10, vec![0.5; 10]).unwrap();
        let opts = SolverOptions {
            max_nonzeros: 8,
            l0_mode: L0Mode::Exhaustive,
            support_budget: 100,
            ..Default::default()
        };
        assert!(matches!(
            sparse_su_l0(&img, &lib, &opts),
            Err(Error::BudgetExceeded { count: 255, .. })
        ));
    }
}
