use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kmeans::{cluster_signatures, ClusterMetric};
use super::vca::{extract_endmembers, extract_from_matrix};
use crate::error::{param_err, Error, Result};
use crate::par::map_range;
use crate::rng::{derive, substream, tag};
use crate::spectra::{LibraryClass, SpectralImage, SpectralLibrary};

const CLUSTER_ATTEMPTS: u64 = 10;

fn default_runs() -> usize {
    5
}
fn default_subset() -> usize {
    500
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleExtractionConfig {
    /// Number of classes `P`.
    pub classes: usize,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default = "default_subset")]
    pub subset_size: usize,
    #[serde(default = "default_true")]
    pub with_replacement: bool,
    #[serde(default)]
    pub cluster_metric: ClusterMetric,
    #[serde(default)]
    pub seed: u64,
}

impl BundleExtractionConfig {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            num_runs: default_runs(),
            subset_size: default_subset(),
            with_replacement: true,
            cluster_metric: ClusterMetric::SpectralAngle,
            seed: 0,
        }
    }

    pub fn validate(&self, n_pixels: usize) -> Result<()> {
        if self.classes == 0 || self.num_runs == 0 {
            return Err(param_err("classes and num_runs must be at least 1"));
        }
        if self.subset_size < self.classes {
            return Err(param_err(format!(
                "subset_size {} smaller than the class count {}",
                self.subset_size, self.classes
            )));
        }
        if !self.with_replacement && self.subset_size > n_pixels {
            return Err(param_err(format!(
                "subset_size {} exceeds {n_pixels} pixels without replacement",
                self.subset_size
            )));
        }
        Ok(())
    }
}

fn subset_indices(n: usize, cfg: &BundleExtractionConfig, run: usize) -> Vec<usize> {
    let mut rng = substream(cfg.seed, tag::SUBSET, run as u64);
    if cfg.with_replacement {
        (0..cfg.subset_size).map(|_| rng.random_range(0..n)).collect()
    } else {
        let mut idx = index::sample(&mut rng, n, cfg.subset_size).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Extracts endmembers from `num_runs` random pixel subsets, pools them
/// (negative noise clamped to zero, exact duplicates dropped), and clusters the pool into `P` classes named
/// `class_1..` by descending mean signature norm.
pub fn extract_bundles(image: &SpectralImage, cfg: &BundleExtractionConfig) -> Result<SpectralLibrary> {
    let n = image.n_pixels();
    cfg.validate(n)?;
    let (l, p) = (image.bands(), cfg.classes);
    let y = image.matrix();
    let runs = map_range(cfg.num_runs, |r| {
        let idx = subset_indices(n, cfg, r);
        let sub = DMatrix::from_fn(l, idx.len(), |b, c| y[(b, idx[c])]);
        extract_from_matrix(&sub, p, derive(cfg.seed, r as u64)).map(|e| (e, idx))
    });
    let mut pool: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_runs * p);
    for run in runs {
        let (e, _) = run?;
        for col in e.signatures.column_iter() {
            // noisy pixels can dip below zero; library entries may not
            let sig: Vec<f64> = col.iter().map(|v| v.max(0.0)).collect();
            if !pool.contains(&sig) {
                pool.push(sig);
            }
        }
    }
    if pool.len() < p {
        return Err(Error::Clustering(format!(
            "only {} distinct signatures for {p} classes",
            pool.len()
        )));
    }
    let m = DMatrix::from_vec(l, pool.len(), pool.concat());
    let mut last_err = None;
    let mut clustering = None;
    for attempt in 0..CLUSTER_ATTEMPTS {
        match cluster_signatures(&m, p, cfg.cluster_metric, derive(cfg.seed ^ tag::KMEANS, attempt)) {
            Ok(c) => {
                clustering = Some(c);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let clustering = match clustering {
        Some(c) => c,
        None => return Err(last_err.unwrap_or_else(|| Error::Clustering("no attempt made".into()))),
    };
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (j, &k) in clustering.labels.iter().enumerate() {
        groups[k].push(j);
    }
    let mean_norm = |g: &Vec<usize>| g.iter().map(|&j| m.column(j).norm()).sum::<f64>() / g.len() as f64;
    let norms: Vec<f64> = groups.iter().map(mean_norm).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let classes = order
        .iter()
        .enumerate()
        .map(|(rank, &k)| LibraryClass {
            name: format!("class_{}", rank + 1),
            signatures: DMatrix::from_fn(l, groups[k].len(), |b, c| m[(b, groups[k][c])]),
        })
        .collect();
    SpectralLibrary::from_classes(l, classes)
}

/// One VCA run on the whole image as a library with one signature per class,
/// clamped at zero and named `class_1..` by descending norm.
pub fn extract_library(image: &SpectralImage, p: usize, seed: u64) -> Result<SpectralLibrary> {
    let e = extract_endmembers(image, p, seed)?;
    let l = image.bands();
    let sigs: Vec<Vec<f64>> = e
        .signatures
        .column_iter()
        .map(|c| c.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let norm = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| norm(&sigs[b]).total_cmp(&norm(&sigs[a])).then(a.cmp(&b)));
    let classes = order
        .iter()
        .enumerate()
        .map(|(rank, &k)| LibraryClass {
            name: format!("class_{}", rank + 1),
            signatures: DMatrix::from_column_slice(l, 1, &sigs[k]),
        })
        .collect();
    SpectralLibrary::from_classes(l, classes)
}
