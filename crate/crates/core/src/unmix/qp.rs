//! Small dense QPs `min 1/2 x'Gx - c'x` over the simplex or the nonnegative
//! orthant.
//!
//! The main iteration is ADMM with a cached Cholesky factor of `G + rho I`;
//! the iterate's support is periodically handed to an exact equality solve,
//! and a primal active-set pass finishes from the final ADMM point. The
//! returned point satisfies the KKT conditions to roughly machine precision
//! whenever the active-set pass succeeds.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::linalg::{project_simplex, solve_dense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Constraint {
    Simplex,
    Nonnegative,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct QpSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub polish_every: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub kkt: f64,
}

pub(crate) struct BoxedQp {
    gram: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    rho: f64,
    constraint: Constraint,
    scale: f64,
}

impl BoxedQp {
    /// `rho_scale` multiplies the mean diagonal of `G` to give the ADMM penalty.
    pub fn new(gram: DMatrix<f64>, constraint: Constraint, rho_scale: f64) -> Self {
        let n = gram.nrows();
        let mean_diag = if n == 0 { 1.0 } else { gram.trace() / n as f64 };
        let rho = rho_scale * mean_diag.max(1e-12);
        let shifted = &gram + DMatrix::identity(n, n) * rho;
        let factor = Cholesky::new(shifted).expect("G + rho I is positive definite");
        let scale = gram.amax().max(1e-300);
        Self {
            gram,
            factor,
            rho,
            constraint,
            scale,
        }
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self.constraint {
            Constraint::Simplex => DVector::from_vec(project_simplex(v.as_slice())),
            Constraint::Nonnegative => v.map(|x| x.max(0.0)),
        }
    }

    fn sum_to_one(&self) -> bool {
        self.constraint == Constraint::Simplex
    }

    pub fn solve(&self, c: &DVector<f64>, settings: &QpSettings) -> QpSolution {
        self.solve_from(c, settings, None)
    }

    /// Like `solve`, starting ADMM from the projection of `warm`. The warm
    /// point's support is tried first and kept if it is already optimal.
    pub fn solve_from(
        &self,
        c: &DVector<f64>,
        settings: &QpSettings,
        warm: Option<&DVector<f64>>,
    ) -> QpSolution {
        let n = self.gram.nrows();
        let mut z = match (warm, self.constraint) {
            (Some(w), _) => self.project(w),
            (None, Constraint::Simplex) => DVector::from_element(n, 1.0 / n as f64),
            (None, Constraint::Nonnegative) => DVector::zeros(n),
        };
        if warm.is_some() && settings.polish_every > 0 {
            if let Some(sol) = self.polish_support(c, &z) {
                return QpSolution {
                    kkt: self.kkt(c, &sol),
                    x: sol,
                    iterations: 0,
                };
            }
        }
        let mut u = DVector::zeros(n);
        let mut iterations = 0;
        let tol_scale = settings.tol * (1.0 + c.amax());
        for it in 1..=settings.max_iters {
            iterations = it;
            let rhs = c + (&z - &u) * self.rho;
            let x = self.factor.solve(&rhs);
            let z_prev = z;
            z = self.project(&(&x + &u));
            u += &x - &z;
            let primal = (&x - &z).norm();
            let dual = self.rho * (&z - &z_prev).norm();
            if settings.polish_every > 0 && it % settings.polish_every == 0 {
                if let Some(sol) = self.polish_support(c, &z) {
                    return QpSolution {
                        kkt: self.kkt(c, &sol),
                        x: sol,
                        iterations,
                    };
                }
            }
            if primal <= tol_scale && dual <= tol_scale {
                break;
            }
        }
        let base_kkt = self.kkt(c, &z);
        if let Some(x) = active_set(&self.gram, c, self.sum_to_one(), &z, 60 + 6 * n) {
            let k = self.kkt(c, &x);
            if k <= base_kkt {
                return QpSolution {
                    x,
                    iterations,
                    kkt: k,
                };
            }
        }
        QpSolution {
            x: z,
            iterations,
            kkt: base_kkt,
        }
    }

    /// Exact solve on the support of `z`; accepted only if it is optimal.
    fn polish_support(&self, c: &DVector<f64>, z: &DVector<f64>) -> Option<DVector<f64>> {
        let free: Vec<bool> = z.iter().map(|&v| v > 0.0).collect();
        let (sol, _) = equality_solve(&self.gram, c, self.sum_to_one(), &free)?;
        if sol.iter().zip(&free).any(|(&v, &f)| f && v <= 0.0) {
            return None;
        }
        (self.kkt(c, &sol) <= 1e-11 * self.scale.max(c.amax())).then_some(sol)
    }

    pub fn kkt(&self, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
        kkt_residual(&self.gram, c, x, self.sum_to_one())
    }
}

/// Largest violation of the KKT conditions of the QP at `x`.
pub(crate) fn kkt_residual(gram: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>, sum_to_one: bool) -> f64 {
    let g = gram * x - c;
    let mut worst: f64 = x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
    let shift = if sum_to_one {
        worst = worst.max((x.sum() - 1.0).abs());
        let (s, k) = x
            .iter()
            .zip(g.iter())
            .filter(|(&xi, _)| xi > 0.0)
            .fold((0.0, 0usize), |(s, k), (_, &gi)| (s + gi, k + 1));
        if k > 0 {
            -s / k as f64
        } else {
            -g.min()
        }
    } else {
        0.0
    };
    for (xi, gi) in x.iter().zip(g.iter()) {
        let mu = gi + shift;
        let v = if *xi > 0.0 { mu.abs() } else { (-mu).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

/// Minimizes over the free coordinates with the rest fixed at zero. Returns the
/// full-length point and the sum-to-one multiplier.
fn equality_solve(
    gram: &DMatrix<f64>,
    c: &DVector<f64>,
    sum_to_one: bool,
    free: &[bool],
) -> Option<(DVector<f64>, f64)> {
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let k = idx.len();
    let n = free.len();
    if k == 0 {
        return if sum_to_one {
            None
        } else {
            Some((DVector::zeros(n), 0.0))
        };
    }
    let extra = usize::from(sum_to_one);
    let mut a = DMatrix::zeros(k + extra, k + extra);
    let mut b = DVector::zeros(k + extra);
    for (r, &i) in idx.iter().enumerate() {
        for (s, &j) in idx.iter().enumerate() {
            a[(r, s)] = gram[(i, j)];
        }
        b[r] = c[i];
        if sum_to_one {
            a[(r, k)] = 1.0;
            a[(k, r)] = 1.0;
        }
    }
    if sum_to_one {
        b[k] = 1.0;
    }
    let sol = solve_dense(a, &b)?;
    let mut x = DVector::zeros(n);
    for (r, &i) in idx.iter().enumerate() {
        x[i] = sol[r];
    }
    let nu = if sum_to_one { sol[k] } else { 0.0 };
    Some((x, nu))
}

/// Primal active-set method started from a feasible point.
pub(crate) fn active_set(
    gram: &DMatrix<f64>,
    c: &DVector<f64>,
    sum_to_one: bool,
    x0: &DVector<f64>,
    max_iter: usize,
) -> Option<DVector<f64>> {
    let n = x0.len();
    let mut x = x0.map(|v| v.max(0.0));
    if sum_to_one {
        let s = x.sum();
        if s > 0.0 {
            x /= s;
        } else {
            // best vertex
            let j = (0..n)
                .min_by(|&a, &b| (0.5 * gram[(a, a)] - c[a]).total_cmp(&(0.5 * gram[(b, b)] - c[b])))
                .unwrap_or(0);
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
    }
    let mut free: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let tol = 1e-12 * gram.amax().max(c.amax()).max(1e-300);
    for _ in 0..max_iter {
        let (z, nu) = equality_solve(gram, c, sum_to_one, &free)?;
        let blocking: Vec<usize> = (0..n).filter(|&i| free[i] && z[i] <= 0.0).collect();
        if blocking.is_empty() {
            x = z;
            let g = gram * &x - c;
            let candidate = (0..n)
                .filter(|&i| !free[i])
                .map(|i| (i, g[i] + nu))
                .filter(|&(_, mu)| mu < -tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match candidate {
                Some((i, _)) => free[i] = true,
                None => return Some(x),
            }
        } else {
            // step toward z until the first blocking coordinate hits zero
            let mut alpha = 1.0f64;
            let mut leaving = None;
            for &i in &blocking {
                let denom = x[i] - z[i];
                if denom > 0.0 && x[i] / denom < alpha {
                    alpha = x[i] / denom;
                    leaving = Some(i);
                }
            }
            x = &x + (&z - &x) * alpha;
            if let Some(i) = leaving {
                free[i] = false;
            }
            for i in 0..n {
                if !free[i] || x[i] <= 0.0 {
                    free[i] = false;
                    x[i] = 0.0;
                }
            }
            if sum_to_one {
                let s = x.sum();
                if s <= 0.0 {
                    return None;
                }
                x /= s;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> QpSettings {
        QpSettings {
            tol: 1e-8,
            max_iters: 2000,
            polish_every: 10,
        }
    }

    /// Brute-force oracle: enumerate every support and keep the best feasible
    /// stationary point.
    fn enumerate_supports(g: &DMatrix<f64>, c: &DVector<f64>, simplex: bool) -> DVector<f64> {
        let n = g.nrows();
        let obj = |x: &DVector<f64>| 0.5 * x.dot(&(g * x)) - c.dot(x);
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << n) {
            if simplex && mask == 0 {
                continue;
            }
            let free: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let Some((x, _)) = equality_solve(g, c, simplex, &free) else {
                continue;
            };
            if x.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let f = obj(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf - 1e-14) {
                best = Some((f, x));
            }
        }
        best.unwrap().1
    }

    fn random_problem(seed: u64, l: usize, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, 99, 0);
        let m = DMatrix::from_fn(l, n, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(l, |_, _| rng.random::<f64>() * 1.5);
        (m.transpose() * &m, m.transpose() * y)
    }

    #[test]
    fn simplex_matches_support_enumeration() {
        for seed in 0..30 {
            let (g, c) = random_problem(seed, 8, 4);
            let qp = BoxedQp::new(g.clone(), Constraint::Simplex, 1.0);
            let sol = qp.solve(&c, &settings());
            let oracle = enumerate_supports(&g, &c, true);
            assert!((&sol.x - &oracle).amax() < 1e-9, "seed {seed}");
            assert!(sol.kkt <= 1e-8);
        }
    }

    #[test]
    fn nonnegative_matches_support_enumeration() {
        for seed in 0..30 {
            let (g, mut c) = random_problem(seed + 100, 10, 5);
            c.add_scalar_mut(-0.3);
            let qp = BoxedQp::new(g.clone(), Constraint::Nonnegative, 1.0);
            let sol = qp.solve(&c, &settings());
            let oracle = enumerate_supports(&g, &c, false);
            assert!((&sol.x - &oracle).amax() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn warm_starts_reach_the_same_optimum() {
        for seed in 0..30 {
            let (g, c) = random_problem(seed + 200, 8, 4);
            let qp = BoxedQp::new(g.clone(), Constraint::Simplex, 1.0);
            let oracle = enumerate_supports(&g, &c, true);
            // from the optimum itself, a nearby point, and a wrong vertex
            let mut near = oracle.map(|v| v + 0.05);
            near /= near.sum();
            let mut vertex = DVector::zeros(4);
            vertex[(seed % 4) as usize] = 1.0;
            for warm in [&oracle, &near, &vertex] {
                let sol = qp.solve_from(&c, &settings(), Some(warm));
                assert!((&sol.x - &oracle).amax() < 1e-9, "seed {seed}");
            }
        }
    }

    #[test]
    fn rank_deficient_gram_still_feasible() {
        // duplicate columns make G singular
        let m = DMatrix::from_row_slice(3, 3, &[0.1, 0.1, 0.5, 0.2, 0.2, 0.4, 0.3, 0.3, 0.1]);
        let y = DVector::from_vec(vec![0.3, 0.3, 0.2]);
        let g = m.transpose() * &m;
        let c = m.transpose() * y;
        let qp = BoxedQp::new(g, Constraint::Simplex, 1.0);
        let sol = qp.solve(&c, &settings());
        assert!((sol.x.sum() - 1.0).abs() < 1e-12);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
        assert!(sol.kkt < 1e-8);
    }
}
