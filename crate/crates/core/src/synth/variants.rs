use super::config::Interval;
use crate::error::{param_err, Result};
use crate::linalg::{convolve_reflect, gaussian_kernel};
use crate::rng::{substream, tag};

/// Multiplicative variability applied to a base signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingMode {
    /// One factor per variant, uniform over `psi`.
    Elmm { psi: Interval },
    /// One factor per band. Uniform noise is smoothed across bands with a
    /// Gaussian of width `smoothness`, rescaled to undo the variance lost to
    /// smoothing and mapped (clamped) onto `log psi`, so each band's factor
    /// keeps the spread of a uniform draw over `psi`.
    Glmm { psi: Interval, smoothness: f64 },
}

/// `k` scaled copies of `m0`.
pub fn scaling_variants(m0: &[f64], mode: ScalingMode, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if m0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(param_err("base signature must be finite and nonnegative"));
    }
    let psi = match mode {
        ScalingMode::Elmm { psi } | ScalingMode::Glmm { psi, .. } => psi,
    };
    psi.validate("scaling range")?;
    if psi.lo() <= 0.0 {
        return Err(param_err(format!("scaling range {psi:?} must be positive")));
    }
    let variants = (0..k)
        .map(|i| {
            let mut rng = substream(seed, tag::VARIANTS, i as u64);
            match mode {
                ScalingMode::Elmm { psi } => {
                    let s = psi.sample(&mut rng);
                    m0.iter().map(|v| s * v).collect()
                }
                ScalingMode::Glmm { psi, smoothness } => {
                    let (lo, hi) = (psi.lo().ln(), psi.hi().ln());
                    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    let raw: Vec<f64> = m0.iter().map(|_| Interval(-1.0, 1.0).sample(&mut rng)).collect();
                    let kernel = gaussian_kernel(smoothness);
                    let gain = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
                    let smooth = convolve_reflect(&raw, &kernel);
                    m0.iter()
                        .zip(smooth)
                        .map(|(v, s)| v * (mid + half * (s / gain).clamp(-1.0, 1.0)).exp())
                        .collect()
                }
            }
        })
        .collect();
    Ok(variants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::spectral_angle;

    fn base() -> Vec<f64> {
        (0..40).map(|b| 0.1 + 0.02 * b as f64).collect()
    }

    #[test]
    fn unit_elmm_range_is_identity() {
        let m0 = base();
        let v = scaling_variants(
            &m0,
            ScalingMode::Elmm {
                psi: Interval(1.0, 1.0),
            },
            5,
            3,
        )
        .unwrap();
        assert_eq!(v.len(), 5);
        assert!(v.iter().all(|x| *x == m0));
    }

    #[test]
    fn elmm_variants_keep_the_angle() {
        let m0 = base();
        let v = scaling_variants(
            &m0,
            ScalingMode::Elmm {
                psi: Interval(0.5, 1.5),
            },
            8,
            1,
        )
        .unwrap();
        for x in &v {
            assert!(spectral_angle(x, &m0).unwrap() < 1e-7);
        }
    }

    #[test]
    fn constant_glmm_equals_elmm() {
        let m0 = base();
        let c = 1.3;
        let g = scaling_variants(
            &m0,
            ScalingMode::Glmm {
                psi: Interval(c, c),
                smoothness: 4.0,
            },
            3,
            9,
        )
        .unwrap();
        let e = scaling_variants(&m0, ScalingMode::Elmm { psi: Interval(c, c) }, 3, 9).unwrap();
        for (a, b) in g.iter().zip(&e) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn glmm_keeps_zeros_and_range() {
        let mut m0 = base();
        m0[7] = 0.0;
        m0[30] = 0.0;
        let v = scaling_variants(
            &m0,
            ScalingMode::Glmm {
                psi: Interval(0.7, 1.4),
                smoothness: 3.0,
            },
            10,
            5,
        )
        .unwrap();
        for x in &v {
            assert_eq!(x[7], 0.0);
            assert_eq!(x[30], 0.0);
            for (a, b) in x.iter().zip(&m0) {
                if *b > 0.0 {
                    let r = a / b;
                    assert!((0.7 - 1e-12..=1.4 + 1e-12).contains(&r));
                }
            }
        }
        assert_ne!(v[0], v[1]);
    }

    #[test]
    fn glmm_factors_keep_uniform_spread() {
        let m0 = vec![1.0; 120];
        let v = scaling_variants(
            &m0,
            ScalingMode::Glmm {
                psi: Interval(0.5, 2.0),
                smoothness: 6.0,
            },
            200,
            2,
        )
        .unwrap();
        // interior bands only: reflection changes the variance near the ends
        let logs: Vec<f64> = v.iter().flat_map(|x| x[20..100].iter().map(|r| r.ln())).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let sd = (logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / logs.len() as f64).sqrt();
        let target = 0.5 * (2.0f64.ln() - 0.5f64.ln()) / 3f64.sqrt();
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((sd / target - 1.0).abs() < 0.15, "{sd} vs {target}");
        // neighbouring bands stay correlated
        let lag1: f64 = v.iter().map(|x| (x[50].ln() - x[51].ln()).abs()).sum::<f64>() / 200.0;
        assert!(lag1 < 0.2 * sd, "{lag1}");
    }

    #[test]
    fn bad_ranges_are_rejected() {
        let m0 = base();
        assert!(scaling_variants(
            &m0,
            ScalingMode::Elmm {
                psi: Interval(0.0, 1.0)
            },
            2,
            0
        )
        .is_err());
        assert!(scaling_variants(
            &m0,
            ScalingMode::Elmm {
                psi: Interval(-1.0, 1.0)
            },
            2,
            0
        )
        .is_err());
        assert!(scaling_variants(
            &[-0.1],
            ScalingMode::Elmm {
                psi: Interval(1.0, 1.0)
            },
            2,
            0
        )
        .is_err());
    }
}
