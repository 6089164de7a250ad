use nalgebra::DMatrix;

use crate::error::{dim_err, Result};
use crate::spectra::{spectral_angle, SpectralLibrary};

/// Minimum-cost perfect matching on a square cost matrix. Returns
/// `assign[row] = column`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // potentials formulation, 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// Spectral angle between every reference column (rows) and every
/// candidate column (columns); zero-norm pairs cost `pi`.
pub fn angle_cost(reference: &DMatrix<f64>, candidate: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(reference.ncols(), candidate.ncols(), |i, j| {
        spectral_angle(reference.column(i).as_slice(), candidate.column(j).as_slice())
            .unwrap_or(std::f64::consts::PI)
    })
}

/// Reorders the classes of `library` so class `i` best matches column `i` of
/// `reference` (spectral angle between class means). Returns the reordered
/// library and the order applied.
pub fn align_library(
    library: &SpectralLibrary,
    reference: &DMatrix<f64>,
) -> Result<(SpectralLibrary, Vec<usize>)> {
    if library.n_classes() != reference.ncols() || library.bands() != reference.nrows() {
        return Err(dim_err(format!(
            "library has {} classes x {} bands, reference {} x {}",
            library.n_classes(),
            library.bands(),
            reference.ncols(),
            reference.nrows()
        )));
    }
    let order = hungarian(&angle_cost(reference, &library.class_means()));
    Ok((library.permuted(&order), order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn total(cost: &DMatrix<f64>, assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..6, vals in proptest::collection::vec(0.0f64..10.0, 36)) {
            let cost = DMatrix::from_fn(n, n, |i, j| vals[i * 6 + j]);
            let assign = hungarian(&cost);
            let mut seen = assign.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let best = permutations(n).iter().map(|p| total(&cost, p)).fold(f64::INFINITY, f64::min);
            prop_assert!((total(&cost, &assign) - best).abs() < 1e-9);
        }
    }

    #[test]
    fn library_alignment_undoes_permutation() {
        let lib = SpectralLibrary::new(
            3,
            vec![
                ("a".into(), vec![vec![1.0, 0.1, 0.1]]),
                ("b".into(), vec![vec![0.1, 1.0, 0.1]]),
                ("c".into(), vec![vec![0.1, 0.1, 1.0]]),
            ],
        )
        .unwrap();
        let reference = lib.class_means();
        let shuffled = lib.permuted(&[2, 0, 1]);
        let (aligned, order) = align_library(&shuffled, &reference).unwrap();
        assert_eq!(aligned, lib);
        assert_eq!(order, vec![1, 2, 0]);
    }
}
