//! The unmixing solver suite.
//!
//! | solver | endmember model | output field |
//! |---|---|---|
//! | [`fcls`] | one shared matrix | no |
//! | [`mesma`] | best bundle combination per pixel | yes |
//! | [`sparse_su_l1`] / [`sparse_su_l0`] | sparse combination of library columns | class-weighted proxy |
//! | [`elmm_unmix`] | per-class scaling of a reference matrix | yes |
//! | [`plmm_unmix`] | additive perturbation of a reference matrix | yes |

mod elmm;
mod fcls;
mod mesma;
mod plmm;
pub(crate) mod qp;
mod sparse;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::spectra::{AbundanceMap, EndmemberField, SpectralImage, SpectralLibrary};

pub use elmm::{elmm_cost, elmm_unmix, elmm_unmix_with_init, ElmmState};
pub use fcls::fcls;
pub use mesma::mesma;
pub use plmm::{plmm_cost, plmm_unmix, plmm_unmix_with_init, PlmmState};
pub use sparse::{nonnegative_lasso_kkt, sparse_su_l0, sparse_su_l1, L0Mode};

/// Solver names as used on the command line and in bench configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Fcls,
    Mesma,
    SparseL1,
    SparseL0,
    Elmm,
    Plmm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Fcls,
        Algorithm::Mesma,
        Algorithm::SparseL1,
        Algorithm::SparseL0,
        Algorithm::Elmm,
        Algorithm::Plmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fcls => "fcls",
            Algorithm::Mesma => "mesma",
            Algorithm::SparseL1 => "sparse-l1",
            Algorithm::SparseL0 => "sparse-l0",
            Algorithm::Elmm => "elmm",
            Algorithm::Plmm => "plmm",
        }
    }

    /// Library-based solvers consume bundles; the others a reference matrix.
    pub fn uses_library(self) -> bool {
        matches!(self, Algorithm::Mesma | Algorithm::SparseL1 | Algorithm::SparseL0)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| param_err(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Outer iterations for the alternating solvers.
    pub max_iters: usize,
    /// Relative cost change that stops the alternating solvers.
    pub tol: f64,
    /// ADMM penalty, as a multiple of the mean Gram diagonal.
    pub rho: f64,
    /// Per-unit-abundance penalty of the L1 sparse solver.
    pub lambda_sparse: f64,
    /// ELMM: weight of `||M_n - M0 diag(psi_n)||_F^2`.
    pub lambda_m: f64,
    /// ELMM: weight of the 4-neighbour smoothness of the scaling factors.
    pub lambda_psi: f64,
    /// PLMM: weight of `||dM_n||_F^2`.
    pub gamma_plmm: f64,
    pub seed: u64,
    /// Inner QP stopping tolerance (FCLS sub-problems).
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Primal/dual residual target of the sparse solver.
    pub sparse_tol: f64,
    /// MESMA early stop: accept the first model whose RE falls below this.
    pub re_threshold: Option<f64>,
    /// Maximum number of MESMA model combinations.
    pub model_budget: u128,
    /// L0 solver: maximum number of nonzero library columns.
    pub max_nonzeros: usize,
    pub l0_mode: L0Mode,
    /// Maximum number of supports enumerated by the exhaustive L0 solver.
    pub support_budget: u128,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            rho: 1.0,
            lambda_sparse: 1e-4,
            lambda_m: 0.5,
            lambda_psi: 0.05,
            gamma_plmm: 0.5,
            seed: 0,
            inner_tol: 1e-8,
            inner_max_iters: 2000,
            sparse_tol: 1e-7,
            re_threshold: None,
            model_budget: 1_000_000,
            max_nonzeros: 3,
            l0_mode: L0Mode::Greedy,
            support_budget: 10_000,
        }
    }
}

impl SolverOptions {
    pub(crate) fn qp_settings(&self) -> qp::QpSettings {
        qp::QpSettings {
            tol: self.inner_tol,
            max_iters: self.inner_max_iters,
            polish_every: 10,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("rho", self.rho),
            ("lambda_m", self.lambda_m),
            ("gamma_plmm", self.gamma_plmm),
            ("inner_tol", self.inner_tol),
            ("sparse_tol", self.sparse_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param_err(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda_sparse", self.lambda_sparse),
            ("lambda_psi", self.lambda_psi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(param_err(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverLog {
    pub algorithm: String,
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub wall_time_s: f64,
    /// Accepted cost after initialisation and after each outer iteration.
    pub cost_history: Vec<f64>,
    /// Largest KKT residual over the per-pixel QPs, where applicable.
    pub max_kkt: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct UnmixingResult {
    pub algorithm: Algorithm,
    pub abundances: AbundanceMap,
    pub endmembers: Option<EndmemberField>,
    /// MESMA: chosen signature index per class, per pixel.
    pub selected_model: Option<Vec<Vec<usize>>>,
    /// Root-mean-square reconstruction error per pixel.
    pub per_pixel_re: Vec<f64>,
    /// `L x N` modelled pixels.
    pub reconstruction: DMatrix<f64>,
    /// Sparse solvers: abundances over flattened library columns.
    pub library_abundances: Option<AbundanceMap>,
    /// ELMM: `P x N` scaling factors.
    pub scaling: Option<DMatrix<f64>>,
    /// Sparse L1: pixels whose collapsed mass was ~0 and were reported uniform.
    pub uniform_rows: Vec<usize>,
    pub log: SolverLog,
}

/// Field from per-pixel matrices, or `None` when they hold negative values
/// (libraries mapped into a transformed band space).
/// Runs `algorithm` against `library`; the matrix-based solvers (FCLS,
/// ELMM, PLMM) use its class means as the reference matrix.
pub fn unmix(
    algorithm: Algorithm,
    image: &SpectralImage,
    library: &SpectralLibrary,
    opts: &SolverOptions,
) -> Result<UnmixingResult> {
    let mut result = match algorithm {
        Algorithm::Fcls => fcls(image, &library.class_means(), opts),
        Algorithm::Mesma => mesma(image, library, opts),
        Algorithm::SparseL1 => sparse_su_l1(image, library, opts),
        Algorithm::SparseL0 => sparse_su_l0(image, library, opts),
        Algorithm::Elmm => elmm_unmix(image, &library.class_means(), opts),
        Algorithm::Plmm => plmm_unmix(image, &library.class_means(), opts),
    }?;
    if !algorithm.uses_library() {
        result.abundances = result.abundances.with_class_names(library.class_names())?;
    }
    Ok(result)
}

pub(crate) fn reflectance_field(mats: &[DMatrix<f64>]) -> Result<Option<EndmemberField>> {
    if mats.iter().any(|m| m.iter().any(|&v| v < 0.0)) {
        log::info!("library is not a reflectance library; no endmember field emitted");
        return Ok(None);
    }
    EndmemberField::from_matrices(mats).map(Some)
}

/// Clamps `m` at zero for emission; a column that clamps to all zeros is
/// replaced by the matching (nonnegative) column of `prior`.
pub(crate) fn clamp_emitted(m: &DMatrix<f64>, prior: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.map(|v| v.max(0.0));
    for (mut col, p) in out.column_iter_mut().zip(prior.column_iter()) {
        if col.iter().all(|&v| v == 0.0) {
            col.copy_from(&p.map(|v| v.max(0.0)));
        }
    }
    out
}

pub(crate) fn per_pixel_re(image: &SpectralImage, reconstruction: &DMatrix<f64>) -> Vec<f64> {
    let l = image.bands() as f64;
    (0..image.n_pixels())
        .map(|n| {
            let y = image.pixel(n);
            let r: f64 = reconstruction
                .column(n)
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (r / l).sqrt()
        })
        .collect()
}

pub(crate) fn check_reference(image: &SpectralImage, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != image.bands() {
        return Err(Error::Dimension(format!(
            "reference matrix has {} bands, image {}",
            m.nrows(),
            image.bands()
        )));
    }
    if m.ncols() == 0 {
        return Err(Error::Dimension("reference matrix has no columns".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reference matrix".into()));
    }
    if m.ncols() > m.nrows() {
        log::warn!(
            "{} endmembers for {} bands: the least-squares problem is underdetermined",
            m.ncols(),
            m.nrows()
        );
    }
    Ok(())
}
