use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn varimix(dir: &Path, threads: usize, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_varimix"))
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .args(args)
        .output()
        .expect("spawn varimix");
    assert!(
        out.status.success(),
        "varimix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SCENE: &str = r#"{
  "height": 12,
  "width": 12,
  "base": { "builtin": { "bands": 40 } },
  "abundances": { "generator": "grf", "correlation_length": 3, "sharpness": 0.35,
                  "pure_pixel_fraction": 0.05, "seed": 1 },
  "variability": {
    "classes": [
      { "mode": "glmm_scaling", "psi": [0.7, 1.3], "smoothness": 4 },
      { "mode": "hapke", "mu1": [0.3, 1.0], "mu2": [0.3, 1.0] },
      { "mode": "atmospheric", "mu1": [0.4, 1.0] }
    ],
    "n_variants": 4,
    "seed": 2
  },
  "snr_db": 30,
  "seed": 7
}"#;

fn bench_config() -> String {
    format!(
        r#"{{
  "scene": {SCENE},
  "extraction": {{ "classes": 3, "num_runs": 2, "subset_size": 100, "seed": 3 }},
  "roster": [
    {{ "algorithm": "fcls" }},
    {{ "algorithm": "mesma", "library": "truth-variants" }},
    {{ "algorithm": "elmm", "options": {{ "max_iters": 10 }} }}
  ],
  "n_monte_carlo": 2,
  "master_seed": 5,
  "output_dir": "bench_out"
}}"#
    )
}

/// Runs the whole pipeline in `dir` and returns every CSV it produced.
fn pipeline(dir: &Path, threads: usize) -> Vec<(PathBuf, Vec<u8>)> {
    fs::write(dir.join("scene.json"), SCENE).unwrap();
    fs::write(dir.join("bench.json"), bench_config()).unwrap();
    varimix(
        dir,
        threads,
        &["synth", "--config", "scene.json", "--out", "scene"],
    );
    varimix(
        dir,
        threads,
        &[
            "extract",
            "--image",
            "scene",
            "--classes",
            "3",
            "--runs",
            "3",
            "--subset",
            "100",
            "--seed",
            "9",
            "--out",
            "lib.csv",
        ],
    );
    varimix(
        dir,
        threads,
        &[
            "prune",
            "--library",
            "lib.csv",
            "--method",
            "count",
            "--threshold",
            "0.01",
            "--target",
            "2",
            "--out",
            "pruned.csv",
        ],
    );
    varimix(
        dir,
        threads,
        &[
            "transform",
            "--library",
            "lib.csv",
            "--method",
            "mask",
            "--k",
            "20",
            "--out",
            "t.json",
        ],
    );
    for algo in ["fcls", "mesma", "sparse-l1", "elmm", "plmm"] {
        let out = format!("unmix_{algo}");
        varimix(
            dir,
            threads,
            &[
                "unmix",
                "--image",
                "scene",
                "--algo",
                algo,
                "--library",
                "pruned.csv",
                "--out",
                &out,
            ],
        );
    }
    varimix(
        dir,
        threads,
        &[
            "unmix",
            "--image",
            "scene",
            "--algo",
            "fcls",
            "--library",
            "lib.csv",
            "--transform",
            "t.json",
            "--out",
            "unmix_masked",
        ],
    );
    varimix(dir, threads, &["bench", "--config", "bench.json"]);

    let mut files = Vec::new();
    collect_csv(dir, dir, &mut files);
    files.sort();
    files
}

fn collect_csv(root: &Path, dir: &Path, acc: &mut Vec<(PathBuf, Vec<u8>)>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_csv(root, &path, acc);
        } else if path.extension().is_some_and(|e| e == "csv") {
            // Wall-clock timings are the one intentionally non-reproducible output.
            if path.file_name().is_some_and(|n| n == "timing.csv") {
                continue;
            }
            acc.push((
                path.strip_prefix(root).unwrap().to_path_buf(),
                fs::read(&path).unwrap(),
            ));
        }
    }
}

#[test]
fn pipeline_csvs_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let one = pipeline(a.path(), 1);
    let four = pipeline(b.path(), 4);
    let again = pipeline(c.path(), 4);
    assert!(
        one.len() >= 15,
        "expected a full artifact tree, got {}",
        one.len()
    );
    let names: Vec<_> = one.iter().map(|(p, _)| p.clone()).collect();
    assert_eq!(names, four.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>());
    for ((p, x), (_, y)) in one.iter().zip(&four) {
        assert!(x == y, "{} differs between 1 and 4 threads", p.display());
    }
    assert_eq!(four, again);
}

#[test]
fn synth_writes_truth_meta_with_digests() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.json"), SCENE).unwrap();
    varimix(dir.path(), 2, &["synth", "--config", "scene.json", "--out", "s"]);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/truth_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    let realized = meta["realized_snr_db"].as_f64().unwrap();
    assert!((realized - 30.0).abs() < 0.3, "realized SNR {realized}");
    let digests = meta["digests"].as_object().unwrap();
    for f in [
        "image.json",
        "image.bin",
        "clean.bin",
        "abundances.csv",
        "endmembers.bin",
        "variants.csv",
    ] {
        assert_eq!(digests[f].as_str().unwrap().len(), 64, "{f}");
    }
}

#[test]
fn unmix_accepts_a_reference_matrix() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.json"), SCENE).unwrap();
    varimix(dir.path(), 1, &["synth", "--config", "scene.json", "--out", "s"]);
    // First variant of each class as a one-signature-per-class matrix.
    let variants = fs::read_to_string(dir.path().join("s/variants.csv")).unwrap();
    let mut seen = Vec::new();
    let mut m0 = String::new();
    for (i, line) in variants.lines().enumerate() {
        let class = line.split(',').next().unwrap();
        if i == 0 || !seen.contains(&class.to_string()) {
            if i > 0 {
                seen.push(class.to_string());
            }
            m0.push_str(line);
            m0.push('\n');
        }
    }
    fs::write(dir.path().join("m0.csv"), m0).unwrap();
    varimix(
        dir.path(),
        1,
        &[
            "unmix", "--image", "s", "--algo", "elmm", "--m0", "m0.csv", "--out", "r",
        ],
    );
    for f in [
        "abundances.csv",
        "endmembers.json",
        "per_pixel_re.json",
        "scaling.csv",
        "solver_log.json",
    ] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
    let abund = fs::read_to_string(dir.path().join("r/abundances.csv")).unwrap();
    assert_eq!(abund.lines().count(), 1 + 144);
}

#[test]
fn bench_exit_code_reflects_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        format!(
            r#"{{ "scene": {SCENE},
                 "roster": [ {{ "algorithm": "fcls", "library": "truth-mean" }},
                             {{ "algorithm": "mesma", "library": {{ "file": "missing.csv" }} }} ],
                 "n_monte_carlo": 1, "write_runs": false }}"#
        ),
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_varimix"))
        .current_dir(dir.path())
        .args(["bench", "--config", "bad.json", "--out", "o"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    let report = fs::read_to_string(dir.path().join("o/report.csv")).unwrap();
    assert!(report.contains("fcls"));
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_varimix"))
        .current_dir(dir.path())
        .args([
            "unmix",
            "--image",
            "x",
            "--algo",
            "nope",
            "--library",
            "l.csv",
            "--out",
            "o",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown algorithm"));
}
