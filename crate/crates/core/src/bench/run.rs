use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::align::align_library;
use super::config::{BenchConfig, LibrarySource, RosterEntry};
use super::eval::{eval_target, EvalTarget, Metrics};
use crate::error::Result;
use crate::extract::{extract_bundles, extract_library};
use crate::libops::{apply_transform, SpectralTransform};
use crate::par::map_range;
use crate::rng::{derive, tag};
use crate::spectra::{load_library, AbundanceMap, EndmemberField, SceneTruth, SpectralLibrary};
use crate::synth::synthesize_from_config;
use crate::unmix::{unmix, Algorithm};

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub run: usize,
    pub seed: u64,
    pub label: String,
    pub algorithm: Algorithm,
    /// Metrics, or the error that stopped this cell.
    pub outcome: std::result::Result<Metrics, String>,
}

/// Per-run outputs kept for the artifact tree and plots.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub truth_abundances: AbundanceMap,
    /// One entry per roster label.
    pub abundances: Vec<Option<AbundanceMap>>,
    pub extracted: Option<SpectralLibrary>,
}

/// Mean or median of each metric over the successful runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub rmse_a: Option<f64>,
    pub rmse_m: Option<f64>,
    pub sam_m: Option<f64>,
    pub sam_m_per_pair: Option<f64>,
    pub rmse_y: Option<f64>,
    pub runtime_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntrySummary {
    pub label: String,
    pub algorithm: Algorithm,
    pub library: String,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub mean: Aggregate,
    pub median: Aggregate,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub entries: Vec<EntrySummary>,
    /// Run-major, roster order within a run.
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
    /// SHA-256 of the scene config as JSON.
    pub scene_digest: String,
    /// SHA-256 of the whole bench config as JSON.
    pub config_digest: String,
    pub runs: Vec<Option<RunArtifacts>>,
}

impl BenchReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn mask_field(field: &EndmemberField, kept: &[usize]) -> Result<EndmemberField> {
    let (l, p) = (field.bands(), field.n_classes());
    let rows: Vec<usize> = (0..p)
        .flat_map(|c| kept.iter().map(move |&b| c * l + b))
        .collect();
    EndmemberField::new(kept.len(), p, field.matrix().select_rows(rows.iter()))
}

type Extraction = Option<std::result::Result<SpectralLibrary, String>>;

/// Image-derived libraries of one run, computed only when some entry uses them.
struct RunLibraries {
    bundles: Extraction,
    vca: Extraction,
}

fn library_for(
    entry: &RosterEntry,
    truth: &SceneTruth,
    libs: &RunLibraries,
    base_dir: &Path,
    align: bool,
) -> Result<SpectralLibrary> {
    let reference = truth.variants.class_means();
    let names = truth.variants.class_names();
    let lib = match &entry.library {
        LibrarySource::TruthVariants => return Ok(truth.variants.clone()),
        LibrarySource::TruthMean => return SpectralLibrary::from_matrix(&reference, Some(&names)),
        LibrarySource::Extracted => match &libs.bundles {
            Some(Ok(lib)) => lib.clone(),
            Some(Err(e)) => return Err(crate::Error::Clustering(format!("extraction failed: {e}"))),
            None => return Err(crate::error::param_err("no extraction configured")),
        },
        LibrarySource::Vca => match &libs.vca {
            Some(Ok(lib)) => lib.clone(),
            Some(Err(e)) => return Err(crate::error::param_err(format!("VCA failed: {e}"))),
            None => unreachable!("VCA library is computed whenever an entry asks for it"),
        },
        LibrarySource::File(p) => load_library(if p.is_absolute() {
            p.clone()
        } else {
            base_dir.join(p)
        })?,
    };
    if align {
        Ok(align_library(&lib, &reference)?.0)
    } else {
        Ok(lib)
    }
}

fn run_entry(
    entry: &RosterEntry,
    truth: &SceneTruth,
    libs: &RunLibraries,
    base_dir: &Path,
    align: bool,
) -> Result<(Metrics, AbundanceMap)> {
    let mut lib = library_for(entry, truth, libs, base_dir, align)?;
    if let Some(prune) = &entry.prune {
        lib = prune.apply(&lib, &truth.image_noisy)?;
    }
    let Some(spec) = &entry.transform else {
        let result = unmix(entry.algorithm, &truth.image_noisy, &lib, &entry.options)?;
        let metrics = eval_target(&EvalTarget::from(truth), &result, false)?;
        return Ok((metrics, result.abundances));
    };
    let t: SpectralTransform = spec.build(&lib)?;
    let (image, lib) = apply_transform(&t, &truth.image_noisy, &lib)?;
    let clean = t.apply_columns(truth.image_clean.matrix())?;
    let field = match t.kept_bands() {
        Some(kept) => Some(mask_field(&truth.endmembers, &kept)?),
        None => None,
    };
    let result = unmix(entry.algorithm, &image, &lib, &entry.options)?;
    let target = EvalTarget {
        abundances: &truth.abundances,
        clean: &clean,
        endmembers: field.as_ref(),
    };
    let metrics = eval_target(&target, &result, false)?;
    Ok((metrics, result.abundances))
}

fn run_once(
    cfg: &BenchConfig,
    labels: &[String],
    run: usize,
    base_dir: &Path,
) -> (Vec<Cell>, Option<RunArtifacts>) {
    let seed = cfg.run_seed(run);
    let fail_all = |msg: String| -> Vec<Cell> {
        cfg.roster
            .iter()
            .zip(labels)
            .map(|(e, l)| Cell {
                run,
                seed,
                label: l.clone(),
                algorithm: e.algorithm,
                outcome: Err(msg.clone()),
            })
            .collect()
    };
    let mut scene = cfg.scene.clone();
    scene.seed = seed;
    let truth = match synthesize_from_config(&scene, base_dir) {
        Ok(t) => t,
        Err(e) => return (fail_all(format!("scene synthesis failed: {e}")), None),
    };
    let uses = |src: LibrarySource| cfg.roster.iter().any(|e| e.library == src);
    let libs = RunLibraries {
        bundles: cfg.extraction.as_ref().map(|ex| {
            let mut ex = ex.clone();
            ex.seed = derive(seed, tag::SUBSET ^ ex.seed);
            extract_bundles(&truth.image_noisy, &ex).map_err(|e| e.to_string())
        }),
        vca: uses(LibrarySource::Vca).then(|| {
            let p = truth.variants.n_classes();
            extract_library(&truth.image_noisy, p, derive(seed, tag::VCA)).map_err(|e| e.to_string())
        }),
    };
    let mut cells = Vec::with_capacity(cfg.roster.len());
    let mut abundances = Vec::with_capacity(cfg.roster.len());
    for (entry, label) in cfg.roster.iter().zip(labels) {
        let outcome = run_entry(entry, &truth, &libs, base_dir, cfg.align);
        if let Err(e) = &outcome {
            log::warn!("run {run} ({label}): {e}");
        }
        let (metrics, abund) = match outcome {
            Ok((m, a)) => (Ok(m), Some(a)),
            Err(e) => (Err(e.to_string()), None),
        };
        abundances.push(abund);
        cells.push(Cell {
            run,
            seed,
            label: label.clone(),
            algorithm: entry.algorithm,
            outcome: metrics,
        });
    }
    let artifacts = RunArtifacts {
        run,
        seed,
        height: truth.image_noisy.height(),
        width: truth.image_noisy.width(),
        truth_abundances: truth.abundances,
        abundances,
        extracted: libs.bundles.and_then(|r| r.ok()),
    };
    (cells, Some(artifacts))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn mean(v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn aggregate(ok: &[&Metrics], f: fn(Vec<f64>) -> Option<f64>) -> Aggregate {
    let col = |g: fn(&Metrics) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = ok.iter().filter_map(|m| g(m)).collect();
        // partial availability would mix different subsets of runs
        if vals.len() == ok.len() {
            f(vals)
        } else {
            None
        }
    };
    Aggregate {
        rmse_a: col(|m| Some(m.rmse_a)),
        rmse_m: col(|m| m.rmse_m),
        sam_m: col(|m| m.sam_m),
        sam_m_per_pair: col(|m| m.sam_m_per_pair),
        rmse_y: col(|m| Some(m.rmse_y)),
        runtime_s: col(|m| Some(m.runtime_s)),
    }
}

/// Runs every Monte Carlo repetition (in parallel) and every roster entry.
/// A failing cell is recorded and the bench carries on.
pub fn run_bench(cfg: &BenchConfig, base_dir: &Path) -> Result<BenchReport> {
    cfg.validate()?;
    let labels = cfg.labels();
    let outcomes = map_range(cfg.n_monte_carlo, |k| run_once(cfg, &labels, k, base_dir));
    let mut cells = Vec::new();
    let mut runs = Vec::new();
    for (c, a) in outcomes {
        cells.extend(c);
        runs.push(a);
    }
    let entries = cfg
        .roster
        .iter()
        .zip(&labels)
        .map(|(e, label)| {
            let mine: Vec<&Cell> = cells.iter().filter(|c| &c.label == label).collect();
            let ok: Vec<&Metrics> = mine.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
            EntrySummary {
                label: label.clone(),
                algorithm: e.algorithm,
                library: e.library.describe(),
                runs_ok: ok.len(),
                runs_failed: mine.len() - ok.len(),
                mean: aggregate(&ok, mean),
                median: aggregate(&ok, median),
            }
        })
        .collect();
    let scene_json = serde_json::to_vec(&cfg.scene)?;
    let cfg_json = serde_json::to_vec(cfg)?;
    Ok(BenchReport {
        entries,
        cells,
        seeds: (0..cfg.n_monte_carlo).map(|k| cfg.run_seed(k)).collect(),
        scene_digest: sha256_hex(&scene_json),
        config_digest: sha256_hex(&cfg_json),
        runs,
    })
}

/// `H x W` grid of one abundance row (row-major pixels).
pub(crate) fn abundance_grid(a: &AbundanceMap, class: usize, h: usize, w: usize) -> DMatrix<f64> {
    DMatrix::from_fn(h, w, |r, c| a.matrix()[(class, r * w + c)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unmix::SolverOptions;

    fn small() -> BenchConfig {
        let mut cfg = BenchConfig::reference(20);
        cfg.scene.height = 8;
        cfg.scene.width = 8;
        cfg.n_monte_carlo = 2;
        cfg.scene.variability.n_variants = 4;
        cfg.extraction.as_mut().unwrap().subset_size = 40;
        for e in &mut cfg.roster {
            e.options.max_iters = 20;
        }
        cfg
    }

    #[test]
    fn exact_inversion_cell() {
        let mut cfg = small();
        cfg.scene.snr_db = None;
        cfg.scene.variability.classes = vec![crate::synth::ClassVariability::None; 3];
        cfg.extraction = None;
        cfg.roster = vec![RosterEntry {
            algorithm: Algorithm::Fcls,
            label: None,
            options: SolverOptions::default(),
            library: LibrarySource::TruthMean,
            prune: None,
            transform: None,
        }];
        let r = run_bench(&cfg, Path::new(".")).unwrap();
        assert_eq!(r.failed_cells(), 0);
        assert!(r.entries[0].mean.rmse_a.unwrap() < 1e-6);
        assert!(r.entries[0].mean.rmse_m.is_none());
    }

    #[test]
    fn failures_are_recorded_per_cell() {
        let mut cfg = small();
        cfg.roster[1].library = LibrarySource::File("does/not/exist.csv".into());
        let r = run_bench(&cfg, Path::new(".")).unwrap();
        assert_eq!(r.failed_cells(), 2);
        assert_eq!(r.entries[1].runs_failed, 2);
        assert_eq!(r.entries[0].runs_ok, 2);
        assert_eq!(r.seeds, vec![0, 1]);
    }

    #[test]
    fn transformed_entries_score_in_their_band_space() {
        let mut cfg = small();
        cfg.roster.truncate(2);
        cfg.roster[0].transform = Some(crate::libops::TransformSpec::Mask {
            k: Some(10),
            threshold: None,
        });
        cfg.roster[0].library = LibrarySource::TruthVariants;
        cfg.roster[1].transform = Some(crate::libops::TransformSpec::Fda { dim: 2 });
        cfg.roster[1].library = LibrarySource::TruthVariants;
        let r = run_bench(&cfg, Path::new(".")).unwrap();
        assert_eq!(r.failed_cells(), 0, "{:?}", r.cells);
        let mesma_fda = r.cells.iter().find(|c| c.label == "mesma").unwrap();
        assert!(mesma_fda.outcome.as_ref().unwrap().rmse_m.is_none());
    }
}
