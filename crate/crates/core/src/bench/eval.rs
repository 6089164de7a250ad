use nalgebra::DMatrix;
use serde::Serialize;

use super::align::{angle_cost, hungarian};
use crate::error::{dim_err, Result};
use crate::spectra::{rmse, sam_field, AbundanceMap, EndmemberField, SamNormalization, SceneTruth};
use crate::unmix::UnmixingResult;

/// One metric row. Endmember metrics are present only for solvers that
/// estimate per-pixel signatures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub rmse_a: f64,
    pub rmse_m: Option<f64>,
    /// Angle sum divided by `L * P * N`.
    pub sam_m: Option<f64>,
    /// Plain mean angle per signature pair.
    pub sam_m_per_pair: Option<f64>,
    pub rmse_y: f64,
    pub runtime_s: f64,
}

/// What an unmixing result is scored against.
#[derive(Debug, Clone)]
pub struct EvalTarget<'a> {
    pub abundances: &'a AbundanceMap,
    /// `L x N` noiseless pixels, in the band space the solver saw.
    pub clean: &'a DMatrix<f64>,
    /// True field in the same band space, if comparable.
    pub endmembers: Option<&'a EndmemberField>,
}

impl<'a> From<&'a SceneTruth> for EvalTarget<'a> {
    fn from(t: &'a SceneTruth) -> Self {
        Self {
            abundances: &t.abundances,
            clean: t.image_clean.matrix(),
            endmembers: Some(&t.endmembers),
        }
    }
}

/// Class order of `result` matching the target: signature angles of class
/// means when both fields exist, abundance squared error otherwise.
fn alignment(target: &EvalTarget, result: &UnmixingResult) -> Vec<usize> {
    if let (Some(t), Some(r)) = (target.endmembers, &result.endmembers) {
        if t.bands() == r.bands() {
            return hungarian(&angle_cost(&t.class_means(), &r.class_means()));
        }
    }
    let (a, b) = (target.abundances.matrix(), result.abundances.matrix());
    let p = a.nrows();
    let cost = DMatrix::from_fn(p, p, |i, j| (a.row(i) - b.row(j)).norm_squared());
    hungarian(&cost)
}

/// Scores `result`; with `align` the result classes are first matched to the
/// target classes.
pub fn eval_target(target: &EvalTarget, result: &UnmixingResult, align: bool) -> Result<Metrics> {
    let p = target.abundances.n_classes();
    if result.abundances.n_classes() != p {
        return Err(dim_err(format!(
            "result has {} classes, truth {p}",
            result.abundances.n_classes()
        )));
    }
    let order = if align {
        alignment(target, result)
    } else {
        (0..p).collect()
    };
    let abundances = result.abundances.permuted(&order);
    let rmse_a = rmse(target.abundances.matrix(), abundances.matrix())?;
    let rmse_y = rmse(target.clean, &result.reconstruction)?;
    let (mut rmse_m, mut sam_m, mut sam_pair) = (None, None, None);
    if let (Some(t), Some(r)) = (target.endmembers, &result.endmembers) {
        if t.matrix().shape() == r.matrix().shape() {
            let r = r.permuted(&order);
            rmse_m = Some(rmse(t.matrix(), r.matrix())?);
            sam_m = Some(sam_field(t, &r, SamNormalization::BandsClassesPixels)?);
            sam_pair = Some(sam_field(t, &r, SamNormalization::PerPair)?);
        }
    }
    Ok(Metrics {
        rmse_a,
        rmse_m,
        sam_m,
        sam_m_per_pair: sam_pair,
        rmse_y,
        runtime_s: result.log.wall_time_s,
    })
}

/// Scores `result` against a synthetic scene's ground truth.
pub fn eval_result(truth: &SceneTruth, result: &UnmixingResult, align: bool) -> Result<Metrics> {
    eval_target(&EvalTarget::from(truth), result, align)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::SpectralLibrary;
    use crate::synth::{synthesize_from_config, SceneConfig};
    use crate::unmix::{unmix, Algorithm, SolverOptions};

    fn truth() -> SceneTruth {
        synthesize_from_config(&SceneConfig::reference(6, 6, 20), std::path::Path::new(".")).unwrap()
    }

    fn repackaged(t: &SceneTruth) -> UnmixingResult {
        let lib = SpectralLibrary::from_matrix(&t.variants.class_means(), None).unwrap();
        let mut r = unmix(Algorithm::Elmm, &t.image_clean, &lib, &SolverOptions::default()).unwrap();
        r.abundances = t.abundances.clone();
        r.endmembers = Some(t.endmembers.clone());
        r.reconstruction = t.image_clean.matrix().clone();
        r
    }

    #[test]
    fn truth_scores_zero() {
        let t = truth();
        let m = eval_result(&t, &repackaged(&t), true).unwrap();
        assert_eq!((m.rmse_a, m.rmse_y), (0.0, 0.0));
        assert_eq!(m.rmse_m, Some(0.0));
        assert!(m.sam_m.unwrap() < 1e-7);
    }

    #[test]
    fn alignment_undoes_class_permutation() {
        let t = truth();
        let lib = SpectralLibrary::from_matrix(&t.variants.class_means(), None).unwrap();
        let r = unmix(Algorithm::Fcls, &t.image_noisy, &lib, &SolverOptions::default()).unwrap();
        let base = eval_result(&t, &r, false).unwrap();
        let mut shuffled = r.clone();
        shuffled.abundances = r.abundances.permuted(&[1, 2, 0]);
        let aligned = eval_result(&t, &shuffled, true).unwrap();
        assert_eq!(aligned, base);
        assert!(eval_result(&t, &shuffled, false).unwrap().rmse_a > base.rmse_a);
        assert!(base.rmse_m.is_none() && base.sam_m.is_none());

        let mut with_field = repackaged(&t);
        with_field.abundances = t.abundances.permuted(&[2, 0, 1]);
        with_field.endmembers = Some(t.endmembers.permuted(&[2, 0, 1]));
        let m = eval_result(&t, &with_field, true).unwrap();
        assert_eq!(m.rmse_a, 0.0);
        assert_eq!(m.rmse_m, Some(0.0));
    }
}
