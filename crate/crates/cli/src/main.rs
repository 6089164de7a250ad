use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use varimix::bench::{run_bench, write_report, BenchConfig};
use varimix::extract::{extract_bundles, BundleExtractionConfig, ClusterMetric};
use varimix::libops::{apply_transform, PruneSpec, SpectralTransform, TransformSpec};
use varimix::spectra::{
    empirical_snr_db, load_image, load_library, save_abundances, save_field, save_image, save_library,
    SpectralImage, SpectralLibrary,
};
use varimix::synth::{synthesize_from_config, SceneConfig};
use varimix::unmix::{unmix, Algorithm, SolverOptions};

#[derive(Parser)]
#[command(
    name = "varimix",
    version,
    about = "Spectral unmixing under endmember variability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truthed scene from a JSON config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a bundle library from an image.
    Extract(ExtractArgs),
    /// Prune or reduce a library.
    Prune(PruneArgs),
    /// Derive a band transform from a library.
    Transform(TransformArgs),
    /// Unmix an image.
    Unmix(UnmixArgs),
    /// Run a Monte Carlo benchmark.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Multiply the RMSE columns of report.md by 1e4.
        #[arg(long)]
        paper_scale: bool,
        /// Overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a reference config.
    ExampleConfig {
        #[arg(value_enum)]
        kind: ConfigKind,
        #[arg(long, default_value_t = 100)]
        bands: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Scene,
    Bench,
}

#[derive(Args)]
struct ExtractArgs {
    /// Scene directory (reads `image.json`) or an image header.
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    classes: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 500)]
    subset: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    without_replacement: bool,
    #[arg(long, default_value = "spectral_angle", value_parser = parse_metric)]
    metric: ClusterMetric,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PruneMethod {
    Count,
    Music,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long, value_enum)]
    method: PruneMethod,
    /// Required by `music`.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Count: coverage radius (radians, or MSE with `--squared-error`).
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    target: usize,
    #[arg(long)]
    squared_error: bool,
    #[arg(long, default_value_t = 3)]
    subspace_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    residual_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformMethod {
    Mask,
    Weights,
    Fda,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long, value_enum)]
    method: TransformMethod,
    /// Mask: keep the `k` most stable bands.
    #[arg(long, conflicts_with = "threshold")]
    k: Option<usize>,
    /// Mask: keep bands whose instability index is at most this.
    #[arg(long)]
    threshold: Option<f64>,
    /// FDA: output dimension.
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UnmixArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, value_parser = parse_algorithm)]
    algo: Algorithm,
    #[arg(long, required_unless_present = "m0", conflicts_with = "m0")]
    library: Option<PathBuf>,
    /// Reference matrix, one signature per class in library CSV format.
    #[arg(long)]
    m0: Option<PathBuf>,
    #[arg(long)]
    opts: Option<PathBuf>,
    #[arg(long)]
    transform: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_metric(s: &str) -> std::result::Result<ClusterMetric, String> {
    s.parse().map_err(|e: varimix::Error| e.to_string())
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: varimix::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { config, out } => synth(&config, &out)?,
        Command::Extract(a) => extract(a)?,
        Command::Prune(a) => prune(a)?,
        Command::Transform(a) => transform(a)?,
        Command::Unmix(a) => unmix_cmd(a)?,
        Command::Bench {
            config,
            paper_scale,
            out,
        } => return bench(&config, paper_scale, out),
        Command::ExampleConfig { kind, bands } => {
            let text = match kind {
                ConfigKind::Scene => serde_json::to_string_pretty(&SceneConfig::reference(50, 50, bands))?,
                ConfigKind::Bench => serde_json::to_string_pretty(&BenchConfig::reference(bands))?,
            };
            println!("{text}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn image_header(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("image.json")
    } else {
        path.to_path_buf()
    }
}

fn read_image(path: &Path) -> Result<SpectralImage> {
    let header = image_header(path);
    load_image(&header).with_context(|| format!("loading image {}", header.display()))
}

fn read_library(path: &Path) -> Result<SpectralLibrary> {
    load_library(path).with_context(|| format!("loading library {}", path.display()))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn ensure_parent(path: &Path) -> Result<()> {
    let dir = parent_dir(path);
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Rows are pixels (or any index), one column per named entry.
fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn synth(config: &Path, out: &Path) -> Result<()> {
    let cfg: SceneConfig = read_json(config)?;
    let truth = synthesize_from_config(&cfg, parent_dir(config))?;
    fs::create_dir_all(out)?;
    let files = [
        "image.json",
        "image.bin",
        "clean.json",
        "clean.bin",
        "abundances.csv",
        "endmembers.json",
        "endmembers.bin",
        "variants.csv",
        "selected_variants.csv",
    ];
    save_image(&truth.image_noisy, out.join(files[0]))?;
    save_image(&truth.image_clean, out.join(files[2]))?;
    save_abundances(&truth.abundances, out.join(files[4]))?;
    save_field(&truth.endmembers, cfg.height, cfg.width, out.join(files[5]))?;
    save_library(&truth.variants, out.join(files[7]))?;
    write_table(
        &out.join(files[8]),
        &truth.variants.class_names(),
        truth
            .selected_variants
            .iter()
            .map(|r| r.iter().map(usize::to_string).collect()),
    )?;
    let mut digests = serde_json::Map::new();
    for f in files {
        digests.insert(f.to_string(), json!(sha256_file(&out.join(f))?));
    }
    let realized = if truth.snr_db.is_finite() {
        Some(empirical_snr_db(&truth.image_clean, &truth.image_noisy)?)
    } else {
        None
    };
    let meta = json!({
        "seed": truth.seed,
        "snr_db": cfg.snr_db,
        "realized_snr_db": realized,
        "config_sha256": sha256_file(config)?,
        "digests": digests,
    });
    fs::write(
        out.join("truth_meta.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    log::info!("wrote scene to {}", out.display());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let image = read_image(&a.image)?;
    let cfg = BundleExtractionConfig {
        classes: a.classes,
        num_runs: a.runs,
        subset_size: a.subset,
        with_replacement: !a.without_replacement,
        cluster_metric: a.metric,
        seed: a.seed,
    };
    let lib = extract_bundles(&image, &cfg)?;
    ensure_parent(&a.out)?;
    save_library(&lib, &a.out)?;
    eprintln!(
        "extracted {} signatures in {} classes {:?}",
        lib.n_signatures(),
        lib.n_classes(),
        lib.class_sizes()
    );
    Ok(())
}

fn prune(a: PruneArgs) -> Result<()> {
    let lib = read_library(&a.library)?;
    let (spec, image) = match a.method {
        PruneMethod::Count => (
            PruneSpec::Count {
                threshold: a.threshold,
                target_per_class: a.target,
                squared_error: a.squared_error,
            },
            None,
        ),
        PruneMethod::Music => {
            let Some(path) = &a.image else {
                bail!("--method music needs --image");
            };
            (
                PruneSpec::Music {
                    subspace_dim: a.subspace_dim,
                    residual_threshold: a.residual_threshold,
                },
                Some(read_image(path)?),
            )
        }
    };
    let pruned = match &image {
        Some(img) => spec.apply(&lib, img)?,
        None => {
            // Count-based reduction does not look at the image.
            let placeholder = SpectralImage::new("none", 1, 1, lib.bands(), vec![0.0; lib.bands()])?;
            spec.apply(&lib, &placeholder)?
        }
    };
    ensure_parent(&a.out)?;
    save_library(&pruned, &a.out)?;
    eprintln!(
        "kept {} of {} signatures",
        pruned.n_signatures(),
        lib.n_signatures()
    );
    Ok(())
}

fn transform(a: TransformArgs) -> Result<()> {
    let lib = read_library(&a.library)?;
    let spec = match a.method {
        TransformMethod::Mask => {
            if a.k.is_none() && a.threshold.is_none() {
                bail!("--method mask needs --k or --threshold");
            }
            TransformSpec::Mask {
                k: a.k,
                threshold: a.threshold,
            }
        }
        TransformMethod::Weights => TransformSpec::Weights,
        TransformMethod::Fda => TransformSpec::Fda { dim: a.dim },
    };
    let t = spec.build(&lib)?;
    ensure_parent(&a.out)?;
    fs::write(&a.out, serde_json::to_string_pretty(&t)? + "\n")?;
    eprintln!("{} -> {} bands", t.input_bands(), t.output_bands());
    Ok(())
}

fn unmix_cmd(a: UnmixArgs) -> Result<()> {
    let mut image = read_image(&a.image)?;
    let mut library = match (&a.library, &a.m0) {
        (Some(p), None) => read_library(p)?,
        (None, Some(p)) => {
            let lib = read_library(p)?;
            if lib.class_sizes().iter().any(|&s| s != 1) {
                bail!("--m0 expects exactly one signature per class");
            }
            lib
        }
        _ => bail!("give exactly one of --library and --m0"),
    };
    let opts: SolverOptions = match &a.opts {
        Some(p) => read_json(p)?,
        None => SolverOptions::default(),
    };
    if let Some(p) = &a.transform {
        let t: SpectralTransform = read_json(p)?;
        (image, library) = apply_transform(&t, &image, &library)?;
    }
    let start = Instant::now();
    let result = unmix(a.algo, &image, &library, &opts)?;
    log::info!("{} finished in {:.3}s", a.algo, start.elapsed().as_secs_f64());

    let out = &a.out;
    fs::create_dir_all(out)?;
    save_abundances(&result.abundances, out.join("abundances.csv"))?;
    if let Some(field) = &result.endmembers {
        save_field(field, image.height(), image.width(), out.join("endmembers.json"))?;
    }
    let re = SpectralImage::new(
        "per_pixel_re",
        image.height(),
        image.width(),
        1,
        result.per_pixel_re.clone(),
    )?;
    save_image(&re, out.join("per_pixel_re.json"))?;
    if let Some(lib_ab) = &result.library_abundances {
        save_abundances(lib_ab, out.join("library_abundances.csv"))?;
    }
    let names = library.class_names();
    if let Some(sel) = &result.selected_model {
        write_table(
            &out.join("selected_model.csv"),
            &names,
            sel.iter().map(|r| r.iter().map(usize::to_string).collect()),
        )?;
    }
    if let Some(psi) = &result.scaling {
        write_table(
            &out.join("scaling.csv"),
            &names,
            psi.column_iter().map(|c| c.iter().map(f64::to_string).collect()),
        )?;
    }
    fs::write(
        out.join("solver_log.json"),
        serde_json::to_string_pretty(&result.log)? + "\n",
    )?;
    eprintln!(
        "{}: {} iterations, cost {:.6e}, converged {}",
        a.algo, result.log.iterations, result.log.final_cost, result.log.converged
    );
    Ok(())
}

fn bench(config: &Path, paper_scale: bool, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg: BenchConfig = read_json(config)?;
    let base = parent_dir(config);
    let dir = out.unwrap_or_else(|| base.join(&cfg.output_dir));
    let start = Instant::now();
    let report = run_bench(&cfg, base)?;
    write_report(&report, &dir, paper_scale, cfg.write_runs)?;
    let failed = report.failed_cells();
    eprintln!(
        "{} runs x {} entries in {:.1}s, {} failed cells; report in {}",
        cfg.n_monte_carlo,
        cfg.roster.len(),
        start.elapsed().as_secs_f64(),
        failed,
        dir.display()
    );
    for e in &report.entries {
        if let Some(m) = e.median.rmse_a {
            eprintln!("  {:<12} median RMSE_A {m:.5}", e.label);
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
