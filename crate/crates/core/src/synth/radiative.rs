use crate::error::{param_err, Result};

fn check_mu(mu: f64, what: &str) -> Result<()> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(param_err(format!("{what} = {mu} outside (0, 1]")));
    }
    Ok(())
}

/// Hapke bidirectional reflectance of a Lambertian, densely packed medium
/// with single-scattering albedo `albedo` (per band).
pub fn hapke_reflectance(albedo: &[f64], mu1: f64, mu2: f64) -> Result<Vec<f64>> {
    check_mu(mu1, "mu1")?;
    check_mu(mu2, "mu2")?;
    albedo
        .iter()
        .map(|&w| {
            if !(0.0..=1.0).contains(&w) {
                return Err(param_err(format!("albedo {w} outside [0, 1]")));
            }
            let s = (1.0 - w).sqrt();
            Ok(w / ((1.0 + 2.0 * mu1 * s) * (1.0 + 2.0 * mu2 * s)))
        })
        .collect()
}

fn broadcast(v: &[f64], l: usize, what: &str) -> Result<()> {
    if v.len() != 1 && v.len() != l {
        return Err(param_err(format!(
            "{what} must have 1 or {l} entries, got {}",
            v.len()
        )));
    }
    Ok(())
}

/// Reflectance recovered through a calibration panel imaged under a different
/// illumination angle. `e_sun` and `e_sky` hold either one value or one per
/// band.
pub fn atmospheric_reflectance(
    y_s: &[f64],
    mu1: f64,
    mu2: f64,
    e_sun: &[f64],
    e_sky: &[f64],
) -> Result<Vec<f64>> {
    check_mu(mu1, "mu1")?;
    check_mu(mu2, "mu2")?;
    let l = y_s.len();
    broadcast(e_sun, l, "e_sun")?;
    broadcast(e_sky, l, "e_sky")?;
    let at = |v: &[f64], b: usize| if v.len() == 1 { v[0] } else { v[b] };
    y_s.iter()
        .enumerate()
        .map(|(b, &y)| {
            let (es, ek) = (at(e_sun, b), at(e_sky, b));
            if !(es >= 0.0 && es.is_finite()) {
                return Err(param_err(format!("e_sun {es} must be nonnegative")));
            }
            if !(ek > 0.0 && ek.is_finite()) {
                return Err(param_err(format!("e_sky {ek} must be positive")));
            }
            Ok(y * ((es * mu1 + ek) / (es * mu2 + ek)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hapke_endpoints_and_midpoint() {
        for (m1, m2) in [(1.0, 1.0), (0.3, 0.8), (0.05, 1.0)] {
            let y = hapke_reflectance(&[0.0, 1.0], m1, m2).unwrap();
            assert_eq!(y, vec![0.0, 1.0]);
        }
        // 0.5 / (1 + sqrt 2)^2 = 0.5 * (3 - 2 sqrt 2)
        let expected = 0.5 * (3.0 - 2.0 * 2f64.sqrt());
        let y = hapke_reflectance(&[0.5], 1.0, 1.0).unwrap()[0];
        assert!((y - expected).abs() < 1e-15);
        assert!((y - 0.0857864).abs() < 1e-6);
    }

    #[test]
    fn hapke_rejects_bad_inputs() {
        assert!(hapke_reflectance(&[1.2], 1.0, 1.0).is_err());
        assert!(hapke_reflectance(&[-0.1], 1.0, 1.0).is_err());
        assert!(hapke_reflectance(&[0.5], 0.0, 1.0).is_err());
        assert!(hapke_reflectance(&[0.5], 1.0, 1.5).is_err());
    }

    #[test]
    fn hapke_monotone_on_grid() {
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        for (m1, m2) in [(1.0, 1.0), (0.2, 0.9), (0.5, 0.1)] {
            let y = hapke_reflectance(&grid, m1, m2).unwrap();
            for w in y.windows(2) {
                assert!(w[1] - w[0] > 1e-12, "{w:?}");
            }
        }
    }

    #[test]
    fn atmospheric_identities() {
        let ys = [0.1, 0.4, 0.9];
        let same = atmospheric_reflectance(&ys, 0.7, 0.7, &[1.0], &[0.2]).unwrap();
        assert_eq!(same, ys.to_vec());
        let dark = atmospheric_reflectance(&ys, 0.2, 0.9, &[0.0], &[0.3]).unwrap();
        assert_eq!(dark, ys.to_vec());
        let y = atmospheric_reflectance(&[0.4], 0.9, 1.0, &[1.0], &[0.2]).unwrap()[0];
        assert!((y - 0.4 * 1.1 / 1.2).abs() < 1e-15);
        assert!((y - 0.366667).abs() < 1e-6);
    }

    #[test]
    fn atmospheric_per_band_irradiance() {
        let y = atmospheric_reflectance(&[1.0, 1.0], 0.5, 1.0, &[1.0, 2.0], &[1.0]).unwrap();
        assert!((y[0] - 1.5 / 2.0).abs() < 1e-15);
        assert!((y[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(atmospheric_reflectance(&[1.0, 1.0], 0.5, 1.0, &[1.0; 3], &[1.0]).is_err());
        assert!(atmospheric_reflectance(&[1.0], 0.5, 1.0, &[1.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn atmospheric_preserves_zeros(mu1 in 0.01f64..1.0, mu2 in 0.01f64..1.0,
                                       es in 0.0f64..5.0, ek in 0.01f64..5.0) {
            let y = atmospheric_reflectance(&[0.0, 0.0], mu1, mu2, &[es], &[ek]).unwrap();
            prop_assert_eq!(y, vec![0.0, 0.0]);
        }

        #[test]
        fn hapke_stays_in_unit_interval(w in 0.0f64..=1.0, mu1 in 0.01f64..=1.0, mu2 in 0.01f64..=1.0) {
            let y = hapke_reflectance(&[w], mu1, mu2).unwrap()[0];
            prop_assert!((0.0..=w + 1e-15).contains(&y));
        }
    }
}
