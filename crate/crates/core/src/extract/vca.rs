use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param_err, Error, Result};
use crate::linalg::leading_eigen;
use crate::rng::{substream, tag};
use crate::spectra::SpectralImage;

/// Endmembers picked from the data, with their column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub indices: Vec<usize>,
    /// `L x P`, column `i` is data column `indices[i]`.
    pub signatures: DMatrix<f64>,
    /// The centred data spans fewer than `P - 1` dimensions.
    pub degenerate: bool,
}

fn argmax_abs(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best.0
}

/// Vertex-component extraction on the columns of `y` (`L x N`).
///
/// The data are first reduced either by an affine projection to `P - 1`
/// dimensions (low estimated SNR) or a projective one to `P` dimensions; then
/// `P` times a random direction orthogonal to the already chosen vertices is
/// drawn and the column with the largest absolute projection is kept. For
/// `P = 1` the column with the largest projection on the leading uncentred
/// principal direction is returned.
pub fn extract_from_matrix(y: &DMatrix<f64>, p: usize, seed: u64) -> Result<Extracted> {
    let (l, n) = y.shape();
    if p == 0 {
        return Err(param_err("need at least one endmember"));
    }
    if n < p {
        return Err(param_err(format!("{n} pixels cannot hold {p} endmembers")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("extraction input".into()));
    }
    let nf = n as f64;
    let mean = y.column_mean();
    let centred = y - &mean * DMatrix::from_element(1, n, 1.0);
    let p_y = y.norm_squared() / nf;
    let (ud_c, vals_c) = leading_eigen(&centred * centred.transpose() / nf, p.min(l));
    let rank = vals_c
        .iter()
        .filter(|&&v| v > 1e-10 * p_y.max(f64::MIN_POSITIVE))
        .count();
    let degenerate = rank + 1 < p;
    if degenerate {
        log::warn!("degenerate geometry: data span {rank} dimensions, {p} endmembers requested");
    }
    let pick = |indices: Vec<usize>| Extracted {
        signatures: DMatrix::from_fn(l, indices.len(), |r, c| y[(r, indices[c])]),
        indices,
        degenerate,
    };

    if p == 1 {
        let (u, _) = leading_eigen(y * y.transpose() / nf, 1);
        let sign = if u.column(0).sum() < 0.0 { -1.0 } else { 1.0 };
        let proj = u.transpose() * y * sign;
        let mut best = 0;
        for j in 1..n {
            if proj[j] > proj[best] {
                best = j;
            }
        }
        return Ok(pick(vec![best]));
    }

    let x_p = ud_c.transpose() * &centred;
    let p_x = x_p.norm_squared() / nf + mean.norm_squared();
    let snr_th = 15.0 + 10.0 * (p as f64).log10();
    let num = p_x - p as f64 / l as f64 * p_y;
    let den = p_y - p_x;
    let high_snr = den <= 0.0 || (num > 0.0 && 10.0 * (num / den).log10() >= snr_th);

    let reduced: DMatrix<f64> = if !high_snr {
        let d = p - 1;
        let x = x_p.rows(0, d).into_owned();
        let c = x.column_iter().map(|col| col.norm()).fold(0.0, f64::max);
        let mut out = DMatrix::from_element(p, n, c);
        out.rows_mut(0, d).copy_from(&x);
        out
    } else {
        let (ud, _) = leading_eigen(y * y.transpose() / nf, p.min(l));
        let mut x = ud.transpose() * y;
        let u: DVector<f64> = x.column_mean();
        for mut col in x.column_iter_mut() {
            let s = col.dot(&u);
            if s.abs() > f64::MIN_POSITIVE {
                col /= s;
            } else {
                col.fill(0.0);
            }
        }
        x
    };
    let dim = reduced.nrows();

    let mut rng = substream(seed, tag::VCA, 0);
    let mut a = DMatrix::zeros(dim, p);
    a[(dim - 1, 0)] = 1.0;
    let mut indices = Vec::with_capacity(p);
    for i in 0..p {
        let w = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let pinv = a
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Rank(e.to_string()))?;
        let mut f = &w - &a * (pinv * &w);
        let fnorm = f.norm();
        if fnorm > 0.0 {
            f /= fnorm;
        }
        let v = f.transpose() * &reduced;
        let idx = argmax_abs(v.iter().copied());
        a.set_column(i, &reduced.column(idx));
        indices.push(idx);
    }
    Ok(pick(indices))
}

/// Extracts `p` image pixels that act as vertices of the data simplex.
pub fn extract_endmembers(image: &SpectralImage, p: usize, seed: u64) -> Result<Extracted> {
    extract_from_matrix(image.matrix(), p, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{add_noise, mix_shared, spectral_angle};
    use crate::synth::{builtin_library, sample_abundances_dirichlet};

    fn pure_scene(snr: f64) -> (SpectralImage, DMatrix<f64>) {
        let m = builtin_library(50).unwrap().first_signatures();
        let a = sample_abundances_dirichlet(300, &[1.0; 3], 0.05, 4).unwrap();
        let img = mix_shared(&m, &a, 15, 20).unwrap();
        (add_noise(&img, snr, 1).unwrap(), m)
    }

    #[test]
    fn recovers_pure_pixels_noiseless() {
        let (img, m) = pure_scene(f64::INFINITY);
        let e = extract_endmembers(&img, 3, 0).unwrap();
        assert!(!e.degenerate);
        let mut matched = [false; 3];
        for c in 0..3 {
            let sig = e.signatures.column(c);
            assert_eq!(sig.as_slice(), img.pixel(e.indices[c]));
            let (best, angle) = (0..3)
                .map(|k| (k, spectral_angle(sig.as_slice(), m.column(k).as_slice()).unwrap()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(angle < 1e-6, "{angle}");
            matched[best] = true;
        }
        assert_eq!(matched, [true; 3]);
    }

    #[test]
    fn low_snr_branch_returns_pixels() {
        let (img, _) = pure_scene(8.0);
        let e = extract_endmembers(&img, 3, 2).unwrap();
        for (c, &i) in e.indices.iter().enumerate() {
            assert_eq!(e.signatures.column(c).as_slice(), img.pixel(i));
        }
    }

    #[test]
    fn identical_pixels_are_degenerate() {
        let px: Vec<f64> = (0..10).map(|b| 0.1 * b as f64 + 0.05).collect();
        let data: Vec<f64> = (0..20).flat_map(|_| px.clone()).collect();
        let img = SpectralImage::new("flat", 4, 5, 10, data).unwrap();
        let e = extract_endmembers(&img, 3, 0).unwrap();
        assert!(e.degenerate);
        for c in 0..3 {
            assert_eq!(e.signatures.column(c).as_slice(), px.as_slice());
        }
    }

    #[test]
    fn single_endmember_is_max_principal_projection() {
        let pts = [
            [1.8, 0.2, 0.3],
            [1.0, 1.0, 0.1],
            [0.4, 1.6, 0.9],
            [2.5, 0.7, 0.2],
            [0.3, 0.3, 0.3],
        ];
        let data: Vec<f64> = pts.iter().flatten().copied().collect();
        let img = SpectralImage::new("p1", 1, 5, 3, data).unwrap();
        // power iteration on the uncentred second-moment matrix
        let mut u = [1.0, 1.0, 1.0];
        for _ in 0..500 {
            let mut next = [0.0; 3];
            for p in &pts {
                let d: f64 = p.iter().zip(&u).map(|(a, b)| a * b).sum();
                for k in 0..3 {
                    next[k] += d * p[k];
                }
            }
            let nrm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            u = next.map(|v| v / nrm);
        }
        let proj = |j: usize| pts[j].iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let best = (0..5).max_by(|&i, &j| proj(i).total_cmp(&proj(j))).unwrap();
        let e = extract_endmembers(&img, 1, 0).unwrap();
        assert_eq!(e.indices, vec![best]);
        assert_eq!(best, 3);
    }

    #[test]
    fn too_few_pixels_errors() {
        let img = SpectralImage::new("x", 1, 2, 3, vec![0.1; 6]).unwrap();
        assert!(extract_endmembers(&img, 3, 0).is_err());
    }
}
