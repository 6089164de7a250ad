//! Perturbed linear mixing model: `y_n = (M0 + dM_n) a_n`, with a Frobenius
//! penalty on each perturbation.

use web_time::Instant;

use nalgebra::{DMatrix, DVector};

use super::fcls::{fcls_pixels, SimplexLs};
use super::{
    check_reference, clamp_emitted, per_pixel_re, Algorithm, SolverLog, SolverOptions, UnmixingResult,
};
use crate::error::{dim_err, Error, Result};
use crate::par;
use crate::spectra::{AbundanceMap, EndmemberField, SpectralImage};

#[derive(Debug, Clone)]
pub struct PlmmState {
    /// `P x N`, columns on the simplex.
    pub abundances: DMatrix<f64>,
    /// `L x P` per pixel.
    pub perturbations: Vec<DMatrix<f64>>,
}

fn pixel_term(y: &[f64], m0: &DMatrix<f64>, dm: &DMatrix<f64>, a: &[f64], gamma: f64) -> f64 {
    let (l, p) = m0.shape();
    let mut data = 0.0;
    for b in 0..l {
        let fit: f64 = (0..p).map(|c| (m0[(b, c)] + dm[(b, c)]) * a[c]).sum();
        data += (y[b] - fit) * (y[b] - fit);
    }
    data + gamma * dm.norm_squared()
}

/// `sum_n ||y_n - (M0 + dM_n) a_n||^2 + gamma sum_n ||dM_n||_F^2`.
pub fn plmm_cost(image: &SpectralImage, m0: &DMatrix<f64>, state: &PlmmState, gamma: f64) -> f64 {
    (0..image.n_pixels())
        .map(|n| {
            pixel_term(
                image.pixel(n),
                m0,
                &state.perturbations[n],
                state.abundances.column(n).as_slice(),
                gamma,
            )
        })
        .sum()
}

/// PLMM unmixing initialised from FCLS with `m0` and zero perturbations.
pub fn plmm_unmix(image: &SpectralImage, m0: &DMatrix<f64>, opts: &SolverOptions) -> Result<UnmixingResult> {
    plmm_unmix_with_init(image, m0, opts, None)
}

pub fn plmm_unmix_with_init(
    image: &SpectralImage,
    m0: &DMatrix<f64>,
    opts: &SolverOptions,
    init: Option<PlmmState>,
) -> Result<UnmixingResult> {
    let start = Instant::now();
    check_reference(image, m0)?;
    opts.validate()?;
    let (n, p, l) = (image.n_pixels(), m0.ncols(), image.bands());
    let gamma = opts.gamma_plmm;
    let mut state = match init {
        Some(s) => {
            if s.abundances.shape() != (p, n)
                || s.perturbations.len() != n
                || s.perturbations.iter().any(|d| d.shape() != (l, p))
            {
                return Err(dim_err("PLMM initial state has the wrong shape"));
            }
            s
        }
        None => {
            let sols = fcls_pixels(image, m0, opts);
            let mut a = DMatrix::zeros(p, n);
            for (i, s) in sols.iter().enumerate() {
                a.set_column(i, &s.x);
            }
            PlmmState {
                abundances: a,
                perturbations: vec![DMatrix::zeros(l, p); n],
            }
        }
    };
    let settings = opts.qp_settings();
    let mut terms: Vec<f64> = par::map_range(n, |i| {
        pixel_term(
            image.pixel(i),
            m0,
            &state.perturbations[i],
            state.abundances.column(i).as_slice(),
            gamma,
        )
    });
    let mut cost: f64 = terms.iter().sum();
    if !cost.is_finite() {
        return Err(Error::Divergence("non-finite initial PLMM cost".into()));
    }
    let mut history = vec![cost];
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let prev = cost;

        // perturbations: dM = r a' / (gamma + a'a) with r = y - M0 a
        let cand: Vec<(DMatrix<f64>, f64)> = par::map_range(n, |i| {
            let y = DVector::from_column_slice(image.pixel(i));
            let a = state.abundances.column(i).into_owned();
            let r = &y - m0 * &a;
            let dm = &r * a.transpose() / (gamma + a.norm_squared());
            let t = pixel_term(image.pixel(i), m0, &dm, a.as_slice(), gamma);
            (dm, t)
        });
        for (i, (dm, t)) in cand.into_iter().enumerate() {
            if t <= terms[i] {
                state.perturbations[i] = dm;
                terms[i] = t;
            }
        }

        // abundances: FCLS against the perturbed matrix
        let cand: Vec<(DVector<f64>, f64)> = par::map_range(n, |i| {
            let m = m0 + &state.perturbations[i];
            let y = image.pixel(i);
            let warm = state.abundances.column(i).into_owned();
            let a = SimplexLs::new(&m, opts.rho).solve_from(y, &settings, &warm).x;
            let t = pixel_term(y, m0, &state.perturbations[i], a.as_slice(), gamma);
            (a, t)
        });
        for (i, (a, t)) in cand.into_iter().enumerate() {
            if t <= terms[i] {
                state.abundances.set_column(i, &a);
                terms[i] = t;
            }
        }

        cost = terms.iter().sum();
        if !cost.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite PLMM cost at iteration {iterations}"
            )));
        }
        history.push(cost);
        converged = cost == 0.0 || (prev - cost) <= opts.tol * prev;
    }

    let mats: Vec<DMatrix<f64>> = state
        .perturbations
        .iter()
        .map(|dm| clamp_emitted(&(m0 + dm), m0))
        .collect();
    let mut reconstruction = DMatrix::zeros(l, n);
    for i in 0..n {
        reconstruction.set_column(i, &(&mats[i] * state.abundances.column(i)));
    }
    let re = per_pixel_re(image, &reconstruction);
    Ok(UnmixingResult {
        algorithm: Algorithm::Plmm,
        abundances: AbundanceMap::from_columns(state.abundances, true)?,
        endmembers: Some(EndmemberField::from_matrices(&mats)?),
        selected_model: None,
        per_pixel_re: re,
        reconstruction,
        library_abundances: None,
        scaling: None,
        uniform_rows: Vec::new(),
        log: SolverLog {
            algorithm: Algorithm::Plmm.name().into(),
            iterations,
            final_cost: cost,
            converged,
            wall_time_s: start.elapsed().as_secs_f64(),
            cost_history: history,
            max_kkt: 0.0,
            notes: Vec::new(),
        },
    })
}
