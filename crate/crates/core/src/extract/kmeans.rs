use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::rng::{substream, tag};

const RESTARTS: u64 = 20;
const MAX_LLOYD: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMetric {
    /// Cosine distance between unit-normalised signatures.
    #[default]
    SpectralAngle,
    /// Squared Euclidean distance.
    Euclidean,
}

impl FromStr for ClusterMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral_angle" | "spectral-angle" | "sam" => Ok(Self::SpectralAngle),
            "euclidean" => Ok(Self::Euclidean),
            _ => Err(param_err(format!("unknown cluster metric '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster of each signature, numbered by first appearance.
    pub labels: Vec<usize>,
    /// Summed point-to-centroid distance.
    pub cost: f64,
}

struct Points {
    x: DMatrix<f64>,
    metric: ClusterMetric,
}

impl Points {
    fn dist(&self, j: usize, c: &[f64]) -> f64 {
        let x = self.x.column(j);
        match self.metric {
            ClusterMetric::Euclidean => x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum(),
            ClusterMetric::SpectralAngle => {
                let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                let d: f64 = x.iter().zip(c).map(|(a, b)| a * b).sum();
                if cn > 0.0 {
                    (1.0 - d / cn).max(0.0)
                } else {
                    1.0
                }
            }
        }
    }

    fn n(&self) -> usize {
        self.x.ncols()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }
}

/// Lowest index wins on ties.
fn nearest(pts: &Points, j: usize, centres: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centres.iter().enumerate() {
        let d = pts.dist(j, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn seed_centres(pts: &Points, p: usize, rng: &mut impl rand::Rng) -> Vec<Vec<f64>> {
    let n = pts.n();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d: Vec<f64> = (0..n).map(|j| pts.dist(j, &pts.column(chosen[0]))).collect();
    while chosen.len() < p {
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (j, &w) in d.iter().enumerate() {
                if w > 0.0 && t < w {
                    pick = j;
                    break;
                }
                t -= w;
            }
            if d[pick] == 0.0 {
                // rounding ran past the end; take the last positive weight
                pick = d.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            }
            pick
        } else {
            (0..n).find(|j| !chosen.contains(j)).unwrap_or(0)
        };
        chosen.push(next);
        let c = pts.column(next);
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = dj.min(pts.dist(j, &c));
        }
    }
    chosen.into_iter().map(|j| pts.column(j)).collect()
}

/// One Lloyd run; `None` when a cluster empties.
fn lloyd(pts: &Points, mut centres: Vec<Vec<f64>>) -> Option<(Vec<usize>, f64)> {
    let (l, n, p) = (pts.x.nrows(), pts.n(), centres.len());
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD {
        let next: Vec<usize> = (0..n).map(|j| nearest(pts, j, &centres).0).collect();
        if next == labels {
            break;
        }
        labels = next;
        let mut sums = vec![vec![0.0; l]; p];
        let mut counts = vec![0usize; p];
        for (j, &k) in labels.iter().enumerate() {
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(pts.x.column(j).iter()) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for ((c, s), &m) in centres.iter_mut().zip(sums).zip(&counts) {
            *c = s.into_iter().map(|v| v / m as f64).collect();
        }
    }
    let cost = (0..n).map(|j| pts.dist(j, &centres[labels[j]])).sum();
    Some((labels, cost))
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = Vec::<(usize, usize)>::new();
    labels
        .iter()
        .map(|&k| match map.iter().find(|(old, _)| *old == k) {
            Some(&(_, new)) => new,
            None => {
                map.push((k, map.len()));
                map.len() - 1
            }
        })
        .collect()
}

/// k-means (k-means++ seeding, 20 restarts, lowest cost kept) on the columns
/// of `signatures`.
pub fn cluster_signatures(
    signatures: &DMatrix<f64>,
    p: usize,
    metric: ClusterMetric,
    seed: u64,
) -> Result<Clustering> {
    let n = signatures.ncols();
    if p == 0 || p > n {
        return Err(param_err(format!("cannot form {p} clusters from {n} signatures")));
    }
    if signatures.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signatures".into()));
    }
    let mut x = signatures.clone();
    if metric == ClusterMetric::SpectralAngle {
        for mut col in x.column_iter_mut() {
            let nrm = col.norm();
            if nrm > 0.0 {
                col /= nrm;
            }
        }
    }
    let pts = Points { x, metric };
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..RESTARTS {
        let mut rng = substream(seed, tag::KMEANS, r);
        let centres = seed_centres(&pts, p, &mut rng);
        if let Some((labels, cost)) = lloyd(&pts, centres) {
            if best.as_ref().is_none_or(|b| cost < b.1) {
                best = Some((labels, cost));
            }
        }
    }
    let (labels, cost) =
        best.ok_or_else(|| Error::Clustering(format!("every restart left a cluster empty (k = {p})")))?;
    Ok(Clustering {
        labels: relabel(&labels),
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn duplicates_group_perfectly() {
        let base = [[1.0, 0.0, 0.2], [0.0, 1.0, 0.1], [0.3, 0.3, 1.0]];
        let order = [0, 1, 2, 2, 0, 1, 1, 0, 2];
        let data: Vec<f64> = order.iter().flat_map(|&k| base[k]).collect();
        let m = DMatrix::from_vec(3, order.len(), data);
        for metric in [ClusterMetric::SpectralAngle, ClusterMetric::Euclidean] {
            let c = cluster_signatures(&m, 3, metric, 1).unwrap();
            assert!(same_partition(&c.labels, &order));
            assert_eq!(c.labels[0], 0);
            assert!(c.cost.abs() < 1e-12);
        }
    }

    #[test]
    fn angle_metric_ignores_scale() {
        let mut rng = substream(5, 0, 0);
        let mut m = DMatrix::from_fn(6, 30, |r, c| {
            let centre = if c % 3 == 0 {
                r as f64
            } else if c % 3 == 1 {
                5.0 - r as f64
            } else {
                2.5
            };
            centre + 0.1 + 0.05 * rng.random::<f64>()
        });
        let a = cluster_signatures(&m, 3, ClusterMetric::SpectralAngle, 8).unwrap();
        m.column_mut(4).scale_mut(3.0);
        m.column_mut(11).scale_mut(3.0);
        let b = cluster_signatures(&m, 3, ClusterMetric::SpectralAngle, 8).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn separated_blobs_match_generator() {
        let mut rng = substream(17, 0, 0);
        let sigma = 0.1;
        let truth: Vec<usize> = (0..60).map(|i| (i * 7) % 2).collect();
        // centres 10 sigma apart along the diagonal
        let m = DMatrix::from_fn(5, 60, |_, c| {
            let centre = if truth[c] == 0 {
                0.0
            } else {
                10.0 * sigma / 5f64.sqrt()
            };
            centre + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let c = cluster_signatures(&m, 2, ClusterMetric::Euclidean, 0).unwrap();
        assert!(same_partition(&c.labels, &truth));
    }

    #[test]
    fn too_many_clusters_errors() {
        let m = DMatrix::from_element(3, 2, 1.0);
        assert!(cluster_signatures(&m, 3, ClusterMetric::Euclidean, 0).is_err());
        // two identical points cannot fill two clusters
        assert!(matches!(
            cluster_signatures(&m, 2, ClusterMetric::Euclidean, 0),
            Err(Error::Clustering(_))
        ));
    }
}
