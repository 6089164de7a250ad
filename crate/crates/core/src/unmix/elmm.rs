//! Extended linear mixing model: each class signature is the reference
//! signature scaled by a per-pixel factor, with a Frobenius penalty tying
//! the free per-pixel matrices to that scaled reference and a quadratic
//! 4-neighbour smoothness term on the factors.
//!
//! Cost minimised by block-coordinate descent:
//!
//! ```text
//! J = sum_n ||y_n - M_n a_n||^2
//!   + lambda_m   sum_n ||M_n - M0 diag(psi_n)||_F^2
//!   + lambda_psi sum_{n~n'} ||psi_n - psi_n'||^2
//! ```

use web_time::Instant;

use nalgebra::{DMatrix, DVector};

use super::fcls::{fcls_pixels, SimplexLs};
use super::{
    check_reference, clamp_emitted, per_pixel_re, Algorithm, SolverLog, SolverOptions, UnmixingResult,
};
use crate::error::{dim_err, Error, Result};
use crate::par;
use crate::spectra::{AbundanceMap, EndmemberField, SpectralImage};

const PSI_FLOOR: f64 = 1e-6;
const MAX_HALVINGS: usize = 5;

#[derive(Debug, Clone)]
pub struct ElmmState {
    /// `P x N`, columns on the simplex.
    pub abundances: DMatrix<f64>,
    /// `P x N`, positive.
    pub scaling: DMatrix<f64>,
    /// `L x P` per pixel.
    pub endmembers: Vec<DMatrix<f64>>,
}

fn pixel_term(y: &[f64], m: &DMatrix<f64>, a: &[f64], m0: &DMatrix<f64>, psi: &[f64], lambda_m: f64) -> f64 {
    let (l, p) = m.shape();
    let mut data = 0.0;
    for b in 0..l {
        let fit: f64 = (0..p).map(|c| m[(b, c)] * a[c]).sum();
        data += (y[b] - fit) * (y[b] - fit);
    }
    let mut pen = 0.0;
    for c in 0..p {
        for b in 0..l {
            let d = m[(b, c)] - m0[(b, c)] * psi[c];
            pen += d * d;
        }
    }
    data + lambda_m * pen
}

/// Sum over 4-neighbour pairs and classes of squared scaling differences.
fn smoothness(psi: &DMatrix<f64>, height: usize, width: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..height {
        for c in 0..width {
            let n = r * width + c;
            if c + 1 < width {
                s += (psi.column(n) - psi.column(n + 1)).norm_squared();
            }
            if r + 1 < height {
                s += (psi.column(n) - psi.column(n + width)).norm_squared();
            }
        }
    }
    s
}

fn pixel_terms(image: &SpectralImage, m0: &DMatrix<f64>, state: &ElmmState, lambda_m: f64) -> Vec<f64> {
    par::map_range(image.n_pixels(), |n| {
        pixel_term(
            image.pixel(n),
            &state.endmembers[n],
            state.abundances.column(n).as_slice(),
            m0,
            state.scaling.column(n).as_slice(),
            lambda_m,
        )
    })
}

fn total(terms: &[f64], smooth: f64, lambda_psi: f64) -> f64 {
    terms.iter().sum::<f64>() + lambda_psi * smooth
}

/// The ELMM objective at `state`.
pub fn elmm_cost(
    image: &SpectralImage,
    m0: &DMatrix<f64>,
    state: &ElmmState,
    lambda_m: f64,
    lambda_psi: f64,
) -> f64 {
    let terms = pixel_terms(image, m0, state, lambda_m);
    total(
        &terms,
        smoothness(&state.scaling, image.height(), image.width()),
        lambda_psi,
    )
}

/// Conjugate gradient for `(diag I + lambda L) x = b` on the pixel grid,
/// `L` being the 4-neighbour graph Laplacian.
fn grid_cg(b: &[f64], x0: Option<&[f64]>, diag: f64, lambda: f64, height: usize, width: usize) -> Vec<f64> {
    let n = b.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        for r in 0..height {
            for c in 0..width {
                let i = r * width + c;
                let mut lap = 0.0;
                if c > 0 {
                    lap += x[i] - x[i - 1];
                }
                if c + 1 < width {
                    lap += x[i] - x[i + 1];
                }
                if r > 0 {
                    lap += x[i] - x[i - width];
                }
                if r + 1 < height {
                    lap += x[i] - x[i + width];
                }
                out[i] = diag * x[i] + lambda * lap;
            }
        }
    };
    let mut x: Vec<f64> = match x0 {
        Some(x0) => x0.to_vec(),
        None => b.iter().map(|v| v / diag).collect(),
    };
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = 1e-20 * b.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    let mut ap = vec![0.0; n];
    for _ in 0..(4 * n).max(50) {
        if rr <= stop {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(u, v)| u * v).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

fn initial_state(image: &SpectralImage, m0: &DMatrix<f64>, opts: &SolverOptions) -> ElmmState {
    let n = image.n_pixels();
    let p = m0.ncols();
    let sols = fcls_pixels(image, m0, opts);
    let mut a = DMatrix::zeros(p, n);
    for (i, s) in sols.iter().enumerate() {
        a.set_column(i, &s.x);
    }
    ElmmState {
        abundances: a,
        scaling: DMatrix::from_element(p, n, 1.0),
        endmembers: vec![m0.clone(); n],
    }
}

/// ELMM unmixing initialised from FCLS with `m0`, unit scaling and `M_n = m0`.
pub fn elmm_unmix(image: &SpectralImage, m0: &DMatrix<f64>, opts: &SolverOptions) -> Result<UnmixingResult> {
    elmm_unmix_with_init(image, m0, opts, None)
}

pub fn elmm_unmix_with_init(
    image: &SpectralImage,
    m0: &DMatrix<f64>,
    opts: &SolverOptions,
    init: Option<ElmmState>,
) -> Result<UnmixingResult> {
    let start = Instant::now();
    check_reference(image, m0)?;
    opts.validate()?;
    if m0.column_iter().any(|c| c.norm() == 0.0) {
        return Err(Error::DegenerateSignature("zero column in m0".into()));
    }
    let (n, p, l) = (image.n_pixels(), m0.ncols(), image.bands());
    let (h, w) = (image.height(), image.width());
    let lm = opts.lambda_m;
    let lpsi = opts.lambda_psi;
    let mut state = match init {
        Some(s) => {
            if s.abundances.shape() != (p, n)
                || s.scaling.shape() != (p, n)
                || s.endmembers.len() != n
                || s.endmembers.iter().any(|m| m.shape() != (l, p))
            {
                return Err(dim_err("ELMM initial state has the wrong shape"));
            }
            s
        }
        None => initial_state(image, m0, opts),
    };
    let settings = opts.qp_settings();
    let m0_sq: Vec<f64> = m0.column_iter().map(|c| c.norm_squared()).collect();

    let mut terms = pixel_terms(image, m0, &state, lm);
    let mut smooth = smoothness(&state.scaling, h, w);
    let mut cost = total(&terms, smooth, lpsi);
    if !cost.is_finite() {
        return Err(Error::Divergence("non-finite initial ELMM cost".into()));
    }
    let mut history = vec![cost];
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    let mut notes = Vec::new();

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let prev = cost;

        // abundances: per-pixel FCLS, kept only where the pixel term drops
        let cand: Vec<(DVector<f64>, f64)> = par::map_range(n, |i| {
            let y = image.pixel(i);
            let warm = state.abundances.column(i).into_owned();
            let a = SimplexLs::new(&state.endmembers[i], opts.rho)
                .solve_from(y, &settings, &warm)
                .x;
            let t = pixel_term(
                y,
                &state.endmembers[i],
                a.as_slice(),
                m0,
                state.scaling.column(i).as_slice(),
                lm,
            );
            (a, t)
        });
        for (i, (a, t)) in cand.into_iter().enumerate() {
            if t <= terms[i] {
                state.abundances.set_column(i, &a);
                terms[i] = t;
            }
        }

        // endmembers: closed-form ridge solution per pixel
        let cand: Vec<(DMatrix<f64>, f64)> = par::map_range(n, |i| {
            let y = DVector::from_column_slice(image.pixel(i));
            let a = state.abundances.column(i).into_owned();
            let psi = state.scaling.column(i);
            let mut target = m0.clone();
            for c in 0..p {
                target.column_mut(c).scale_mut(psi[c]);
            }
            // (y a' + lm S)(a a' + lm I)^-1 via Sherman-Morrison
            let rhs = &y * a.transpose() + &target * lm;
            let aa = a.norm_squared();
            let ra = &rhs * &a;
            let m = (&rhs - ra * a.transpose() / (lm + aa)) / lm;
            let t = pixel_term(image.pixel(i), &m, a.as_slice(), m0, psi.as_slice(), lm);
            (m, t)
        });
        for (i, (m, t)) in cand.into_iter().enumerate() {
            if t <= terms[i] {
                state.endmembers[i] = m;
                terms[i] = t;
            }
        }
        cost = total(&terms, smooth, lpsi);

        // scaling factors: one grid-regularised linear system per class
        let mut proposal = DMatrix::zeros(p, n);
        for c in 0..p {
            let rhs: Vec<f64> = (0..n)
                .map(|i| lm * state.endmembers[i].column(c).dot(&m0.column(c)))
                .collect();
            let sol = if lpsi > 0.0 {
                let warm: Vec<f64> = state.scaling.row(c).iter().copied().collect();
                grid_cg(&rhs, Some(&warm), lm * m0_sq[c], lpsi, h, w)
            } else {
                rhs.iter().map(|v| v / (lm * m0_sq[c])).collect()
            };
            for (i, v) in sol.into_iter().enumerate() {
                proposal[(c, i)] = v.max(PSI_FLOOR);
            }
        }
        let old_psi = state.scaling.clone();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            state.scaling = &old_psi + (&proposal - &old_psi) * step;
            let t = pixel_terms(image, m0, &state, lm);
            let s = smoothness(&state.scaling, h, w);
            let c_new = total(&t, s, lpsi);
            if !c_new.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite ELMM cost at iteration {iterations}"
                )));
            }
            if c_new <= cost {
                terms = t;
                smooth = s;
                cost = c_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            state.scaling = old_psi;
            notes.push(format!(
                "scaling step rejected {} times at iteration {iterations}",
                MAX_HALVINGS + 1
            ));
            history.push(cost);
            converged = (prev - cost) <= opts.tol * prev;
            break;
        }
        history.push(cost);
        converged = cost == 0.0 || (prev - cost) <= opts.tol * prev;
    }

    // emitted field is clamped to nonnegative reflectance
    let mats: Vec<DMatrix<f64>> = state
        .endmembers
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let prior = m0 * DMatrix::from_diagonal(&state.scaling.column(i));
            clamp_emitted(m, &prior)
        })
        .collect();
    let mut reconstruction = DMatrix::zeros(l, n);
    for i in 0..n {
        reconstruction.set_column(i, &(&mats[i] * state.abundances.column(i)));
    }
    let re = per_pixel_re(image, &reconstruction);
    Ok(UnmixingResult {
        algorithm: Algorithm::Elmm,
        abundances: AbundanceMap::from_columns(state.abundances, true)?,
        endmembers: Some(EndmemberField::from_matrices(&mats)?),
        selected_model: None,
        per_pixel_re: re,
        reconstruction,
        library_abundances: None,
        scaling: Some(state.scaling),
        uniform_rows: Vec::new(),
        log: SolverLog {
            algorithm: Algorithm::Elmm.name().into(),
            iterations,
            final_cost: cost,
            converged,
            wall_time_s: start.elapsed().as_secs_f64(),
            cost_history: history,
            max_kkt: 0.0,
            notes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cg_solves_small_system() {
        let (h, w) = (3, 4);
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin() + 2.0).collect();
        let x = grid_cg(&b, None, 1.5, 0.7, h, w);
        // dense check
        let mut a = DMatrix::<f64>::identity(12, 12) * 1.5;
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let mut nb = vec![];
                if c > 0 {
                    nb.push(i - 1);
                }
                if c + 1 < w {
                    nb.push(i + 1);
                }
                if r > 0 {
                    nb.push(i - w);
                }
                if r + 1 < h {
                    nb.push(i + w);
                }
                for j in nb {
                    a[(i, i)] += 0.7;
                    a[(i, j)] -= 0.7;
                }
            }
        }
        let r = a * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn smoothness_counts_each_edge_once() {
        // 2x2 grid, one class, values 0,1 / 0,1 -> two horizontal edges of 1
        let psi = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(smoothness(&psi, 2, 2), 2.0);
    }
}
