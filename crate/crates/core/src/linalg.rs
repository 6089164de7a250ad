use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Solves a small dense system, falling back to a pseudo-inverse when singular.
pub(crate) fn solve_dense(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    if let Some(x) = a.clone().lu().solve(b) {
        if x.iter().all(|v| v.is_finite()) {
            // reject near-singular LU solutions whose residual is poor
            let r = &a * &x - b;
            if r.amax() <= 1e-9 * (scale * x.amax() + b.amax()).max(1e-300) {
                return Some(x);
            }
        }
    }
    let svd = a.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    svd.solve(b, eps).ok().filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Leading `k` eigenvectors of a symmetric matrix, by descending eigenvalue,
/// plus all eigenvalues in that order.
pub(crate) fn leading_eigen(m: DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), k, |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (vecs, vals)
}

/// Column mean and population covariance of the columns of `y`.
pub(crate) fn mean_and_covariance(y: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = y.ncols().max(1) as f64;
    let mean = y.column_mean();
    let mut centred = y.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centred * centred.transpose() / n;
    (mean, cov)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Gaussian kernel with standard deviation `sigma`, truncated at 3 sigma.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Reflective (half-sample symmetric) index for any integer offset.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// 1-D convolution with reflective boundary.
pub(crate) fn convolve_reflect(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let r = (kernel.len() / 2) as isize;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * signal[reflect(i as isize + k as isize - r, n)])
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_of_simplex_point_is_identity() {
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_of_far_point_is_vertex() {
        assert_eq!(project_simplex(&[10.0, 0.0, -3.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn reflect_handles_wide_offsets() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(-5, 4), 3);
        assert_eq!(reflect(9, 4), 1);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex_and_is_closest(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let p = project_simplex(&v);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            // variational inequality: <v - p, q - p> <= 0 for all vertices q
            for j in 0..v.len() {
                let ip: f64 = (0..v.len())
                    .map(|i| (v[i] - p[i]) * (if i == j { 1.0 } else { 0.0 } - p[i]))
                    .sum();
                prop_assert!(ip <= 1e-12);
            }
        }
    }
}
