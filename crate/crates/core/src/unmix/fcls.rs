use web_time::Instant;

use nalgebra::{DMatrix, DVector};

use super::qp::{BoxedQp, Constraint, QpSettings, QpSolution};
use super::{check_reference, per_pixel_re, Algorithm, SolverLog, SolverOptions, UnmixingResult};
use crate::error::Result;
use crate::par;
use crate::spectra::{AbundanceMap, SpectralImage};

/// Simplex-constrained least squares against one fixed matrix.
pub(crate) struct SimplexLs<'a> {
    m: &'a DMatrix<f64>,
    qp: BoxedQp,
}

impl<'a> SimplexLs<'a> {
    pub fn new(m: &'a DMatrix<f64>, rho: f64) -> Self {
        Self {
            m,
            qp: BoxedQp::new(m.transpose() * m, Constraint::Simplex, rho),
        }
    }

    pub fn solve(&self, y: &[f64], settings: &QpSettings) -> QpSolution {
        let c = self.m.tr_mul(&DVector::from_column_slice(y));
        self.qp.solve(&c, settings)
    }

    pub fn solve_from(&self, y: &[f64], settings: &QpSettings, warm: &DVector<f64>) -> QpSolution {
        let c = self.m.tr_mul(&DVector::from_column_slice(y));
        self.qp.solve_from(&c, settings, Some(warm))
    }
}

/// Per-pixel `||y - M a||` minimiser with `a >= 0`, `sum(a) = 1`.
pub(crate) fn fcls_pixels(image: &SpectralImage, m: &DMatrix<f64>, opts: &SolverOptions) -> Vec<QpSolution> {
    let solver = SimplexLs::new(m, opts.rho);
    let settings = opts.qp_settings();
    par::map_range(image.n_pixels(), |n| solver.solve(image.pixel(n), &settings))
}

/// Fully constrained least squares with one `L x P` endmember matrix.
pub fn fcls(image: &SpectralImage, m: &DMatrix<f64>, opts: &SolverOptions) -> Result<UnmixingResult> {
    let start = Instant::now();
    check_reference(image, m)?;
    opts.validate()?;
    let sols = fcls_pixels(image, m, opts);
    let p = m.ncols();
    let mut a = DMatrix::zeros(p, image.n_pixels());
    let mut max_kkt: f64 = 0.0;
    let mut iterations = 0;
    for (n, s) in sols.iter().enumerate() {
        a.set_column(n, &s.x);
        max_kkt = max_kkt.max(s.kkt);
        iterations = iterations.max(s.iterations);
    }
    let reconstruction = m * &a;
    let re = per_pixel_re(image, &reconstruction);
    let cost = re.iter().map(|r| r * r * image.bands() as f64).sum();
    Ok(UnmixingResult {
        algorithm: Algorithm::Fcls,
        abundances: AbundanceMap::from_columns(a, true)?,
        endmembers: None,
        selected_model: None,
        per_pixel_re: re,
        reconstruction,
        library_abundances: None,
        scaling: None,
        uniform_rows: Vec::new(),
        log: SolverLog {
            algorithm: Algorithm::Fcls.name().into(),
            iterations,
            final_cost: cost,
            converged: max_kkt <= 1e-8 * (1.0 + m.amax()),
            wall_time_s: start.elapsed().as_secs_f64(),
            cost_history: vec![cost],
            max_kkt,
            notes: Vec::new(),
        },
    })
}
