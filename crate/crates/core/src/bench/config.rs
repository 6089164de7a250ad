use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::extract::{BundleExtractionConfig, ClusterMetric};
use crate::libops::{PruneSpec, TransformSpec};
use crate::synth::SceneConfig;
use crate::unmix::{Algorithm, SolverOptions};

/// Where a roster entry's library comes from. Matrix-based solvers use the
/// class means of that library as their reference.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LibrarySource {
    /// Bundles extracted from the noisy image of each run.
    #[default]
    Extracted,
    /// A single VCA run on the whole noisy image, one signature per class.
    Vca,
    /// The generated variants (the true bundles).
    TruthVariants,
    /// One signature per class: the mean of its true variants.
    TruthMean,
    /// A library CSV, relative paths resolved against the config file.
    File(PathBuf),
}

impl LibrarySource {
    pub fn describe(&self) -> String {
        match self {
            LibrarySource::Extracted => "extracted".into(),
            LibrarySource::Vca => "vca".into(),
            LibrarySource::TruthVariants => "truth-variants".into(),
            LibrarySource::TruthMean => "truth-mean".into(),
            LibrarySource::File(p) => format!("file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub algorithm: Algorithm,
    /// Report label; defaults to the algorithm name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub options: SolverOptions,
    #[serde(default)]
    pub library: LibrarySource,
    #[serde(default)]
    pub prune: Option<PruneSpec>,
    #[serde(default)]
    pub transform: Option<TransformSpec>,
}

fn default_true() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("bench_out")
}

fn default_runs() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub scene: SceneConfig,
    /// Required when any entry uses extracted bundles.
    #[serde(default)]
    pub extraction: Option<BundleExtractionConfig>,
    pub roster: Vec<RosterEntry>,
    #[serde(default = "default_runs")]
    pub n_monte_carlo: usize,
    /// Run `k` uses seed `master_seed + k`.
    #[serde(default)]
    pub master_seed: u64,
    /// Match non-truth libraries to the true classes before unmixing.
    #[serde(default = "default_true")]
    pub align: bool,
    /// Write per-run artifacts under `runs/<k>/`.
    #[serde(default = "default_true")]
    pub write_runs: bool,
    /// Report directory, relative to the config file.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.roster.is_empty() {
            return Err(param_err("roster is empty"));
        }
        if self.n_monte_carlo == 0 {
            return Err(param_err("n_monte_carlo must be at least 1"));
        }
        let needs_extraction = self.roster.iter().any(|e| e.library == LibrarySource::Extracted);
        if needs_extraction && self.extraction.is_none() {
            return Err(param_err(
                "roster uses extracted bundles but no extraction config is given",
            ));
        }
        for e in &self.roster {
            e.options.validate()?;
        }
        let labels = self.labels();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(param_err(format!("duplicate roster label `{l}`")));
            }
            if l.is_empty()
                || !l
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(param_err(format!("label `{l}` must be [A-Za-z0-9_-]+")));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.roster
            .iter()
            .map(|e| e.label.clone().unwrap_or_else(|| e.algorithm.name().to_string()))
            .collect()
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.master_seed.wrapping_add(run as u64)
    }

    /// Desk-scale version of the reference experiment: 50x50 pixels, three
    /// materials, `bands` bands, 30 dB, ten runs. MESMA and sparse-L1 use
    /// extracted bundles; FCLS, ELMM and PLMM use a single VCA run. Solver
    /// weights were picked on scenes with seeds 1000 and up.
    pub fn reference(bands: usize) -> Self {
        let entry = |algorithm, library, options| RosterEntry {
            algorithm,
            label: None,
            options,
            library,
            prune: None,
            transform: None,
        };
        let defaults = SolverOptions::default();
        let elmm = SolverOptions {
            lambda_m: 0.03,
            lambda_psi: 0.5,
            ..defaults.clone()
        };
        let plmm = SolverOptions {
            gamma_plmm: 0.01,
            ..defaults.clone()
        };
        Self {
            scene: SceneConfig::reference(50, 50, bands),
            extraction: Some(BundleExtractionConfig {
                cluster_metric: ClusterMetric::Euclidean,
                ..BundleExtractionConfig::new(3)
            }),
            roster: vec![
                entry(Algorithm::Fcls, LibrarySource::Vca, defaults.clone()),
                entry(Algorithm::Mesma, LibrarySource::Extracted, defaults.clone()),
                entry(Algorithm::SparseL1, LibrarySource::Extracted, defaults),
                entry(Algorithm::Elmm, LibrarySource::Vca, elmm),
                entry(Algorithm::Plmm, LibrarySource::Vca, plmm),
            ],
            n_monte_carlo: 10,
            master_seed: 0,
            align: true,
            write_runs: true,
            output_dir: default_output_dir(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_and_validates() {
        let cfg = BenchConfig::reference(30);
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"library\":\"extracted\""));
        let back: BenchConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.labels(), vec!["fcls", "mesma", "sparse-l1", "elmm", "plmm"]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = BenchConfig::reference(30);
        cfg.extraction = None;
        assert!(cfg.validate().is_err());
        let mut cfg = BenchConfig::reference(30);
        cfg.roster[1].label = Some("fcls".into());
        assert!(cfg.validate().is_err());
        let mut cfg = BenchConfig::reference(30);
        cfg.roster.clear();
        assert!(cfg.validate().is_err());
        let src: LibrarySource = serde_json::from_str(r#"{"file":"lib.csv"}"#).unwrap();
        assert_eq!(src, LibrarySource::File("lib.csv".into()));
    }
}
