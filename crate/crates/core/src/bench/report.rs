use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::run::{abundance_grid, Aggregate, BenchReport};
use crate::error::Result;
use crate::spectra::{save_abundances, save_library};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Aggregated metrics, one row per roster entry. Runtimes are left out so
/// reruns give identical bytes.
pub fn report_csv(report: &BenchReport) -> String {
    let mut out = String::from(
        "label,algorithm,library,runs_ok,runs_failed,mean_rmse_a,median_rmse_a,mean_rmse_m,median_rmse_m,\
         mean_sam_m,median_sam_m,mean_sam_m_per_pair,median_sam_m_per_pair,mean_rmse_y,median_rmse_y\n",
    );
    for e in &report.entries {
        let (m, d) = (&e.mean, &e.median);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            e.label,
            e.algorithm,
            csv_text(&e.library),
            e.runs_ok,
            e.runs_failed,
            opt(m.rmse_a),
            opt(d.rmse_a),
            opt(m.rmse_m),
            opt(d.rmse_m),
            opt(m.sam_m),
            opt(d.sam_m),
            opt(m.sam_m_per_pair),
            opt(d.sam_m_per_pair),
            opt(m.rmse_y),
            opt(d.rmse_y),
        );
    }
    out
}

/// One row per (run, entry); failed cells carry their error.
pub fn cells_csv(report: &BenchReport) -> String {
    let mut out =
        String::from("run,seed,label,algorithm,status,rmse_a,rmse_m,sam_m,sam_m_per_pair,rmse_y,error\n");
    for c in &report.cells {
        let _ = match &c.outcome {
            Ok(m) => writeln!(
                out,
                "{},{},{},{},ok,{},{},{},{},{},",
                c.run,
                c.seed,
                c.label,
                c.algorithm,
                m.rmse_a,
                opt(m.rmse_m),
                opt(m.sam_m),
                opt(m.sam_m_per_pair),
                m.rmse_y
            ),
            Err(e) => writeln!(
                out,
                "{},{},{},{},failed,,,,,,{}",
                c.run,
                c.seed,
                c.label,
                c.algorithm,
                csv_text(e)
            ),
        };
    }
    out
}

pub fn timing_csv(report: &BenchReport) -> String {
    let mut out = String::from("run,label,seconds\n");
    for c in &report.cells {
        if let Ok(m) = &c.outcome {
            let _ = writeln!(out, "{},{},{}", c.run, c.label, m.runtime_s);
        }
    }
    out
}

fn md_cell(v: Option<f64>, scale: f64) -> String {
    match v {
        Some(x) => format!("{:.3}", x * scale),
        None => "–".into(),
    }
}

fn md_table(
    out: &mut String,
    report: &BenchReport,
    pick: fn(&super::run::EntrySummary) -> &Aggregate,
    scale: f64,
) {
    out.push_str("| Algorithm | Library | RMSE_A | RMSE_M | SAM_M | RMSE_Y | Time (s) | Failed |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for e in &report.entries {
        let a = pick(e);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            e.label,
            e.library,
            md_cell(a.rmse_a, scale),
            md_cell(a.rmse_m, scale),
            md_cell(a.sam_m, 1.0),
            md_cell(a.rmse_y, scale),
            a.runtime_s
                .map(|t| format!("{t:.3}"))
                .unwrap_or_else(|| "–".into()),
            e.runs_failed
        );
    }
}

/// Markdown summary; `paper_scale` multiplies the RMSE columns by 1e4.
pub fn report_markdown(report: &BenchReport, paper_scale: bool) -> String {
    let scale = if paper_scale { 1e4 } else { 1.0 };
    let mut out = String::from("# Unmixing benchmark\n\n");
    let _ = writeln!(
        out,
        "{} Monte Carlo runs, seeds {:?}. Scene config digest `{}`.\n",
        report.seeds.len(),
        report.seeds,
        report.scene_digest
    );
    out.push_str(
        "Classes of non-truth libraries are matched to the true classes (Hungarian assignment on the \
         spectral angle between class means) before unmixing. SAM_M divides the angle sum by L·P·N; \
         report.csv also lists the per-pair mean. Sparse-L1 abundances are summed per class and \
         row-normalised.\n\n",
    );
    if paper_scale {
        out.push_str("RMSE columns are multiplied by 10^4.\n\n");
    }
    out.push_str("## Mean over runs\n\n");
    md_table(&mut out, report, |e| &e.mean, scale);
    out.push_str("\n## Median over runs\n\n");
    md_table(&mut out, report, |e| &e.median, scale);
    let failed: Vec<_> = report.cells.iter().filter(|c| c.outcome.is_err()).collect();
    if !failed.is_empty() {
        out.push_str("\n## Failed cells\n\n");
        for c in failed {
            let _ = writeln!(
                out,
                "- run {} (seed {}), {}: {}",
                c.run,
                c.seed,
                c.label,
                c.outcome.as_ref().err().map(String::as_str).unwrap_or("")
            );
        }
    }
    out
}

fn grid_dat(m: &nalgebra::DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn plots(report: &BenchReport, labels: &[String], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut series = String::from("# run");
    for l in labels {
        series.push(' ');
        series.push_str(l);
    }
    series.push('\n');
    for k in 0..report.seeds.len() {
        let _ = write!(series, "{k}");
        for l in labels {
            let v = report
                .cells
                .iter()
                .find(|c| c.run == k && &c.label == l)
                .and_then(|c| c.outcome.as_ref().ok())
                .map_or("NaN".to_string(), |m| m.rmse_a.to_string());
            let _ = write!(series, " {v}");
        }
        series.push('\n');
    }
    fs::write(dir.join("rmse_a_by_run.dat"), series)?;
    if let Some(Some(run)) = report.runs.first() {
        let (h, w) = (run.height, run.width);
        let names = run.truth_abundances.class_names().to_vec();
        for (p, name) in names.iter().enumerate() {
            let g = abundance_grid(&run.truth_abundances, p, h, w);
            fs::write(dir.join(format!("abundance_truth_{name}.dat")), grid_dat(&g))?;
            for (l, a) in labels.iter().zip(&run.abundances) {
                if let Some(a) = a {
                    let g = abundance_grid(a, p, h, w);
                    fs::write(dir.join(format!("abundance_{l}_{name}.dat")), grid_dat(&g))?;
                }
            }
        }
    }
    Ok(())
}

/// Writes `report.csv`, `cells.csv`, `timing.csv`, `report.md`,
/// `meta.json`, `plots/` and (optionally) `runs/<k>/`.
pub fn write_report(report: &BenchReport, dir: &Path, paper_scale: bool, write_runs: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(report))?;
    fs::write(dir.join("cells.csv"), cells_csv(report))?;
    fs::write(dir.join("timing.csv"), timing_csv(report))?;
    fs::write(dir.join("report.md"), report_markdown(report, paper_scale))?;
    let meta = json!({
        "seeds": report.seeds,
        "scene_digest": report.scene_digest,
        "config_digest": report.config_digest,
        "failed_cells": report.failed_cells(),
        "class_alignment": "hungarian on class-mean spectral angle, before unmixing",
        "sam_normalization": "sum / (L*P*N)",
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    let labels: Vec<String> = report.entries.iter().map(|e| e.label.clone()).collect();
    plots(report, &labels, &dir.join("plots"))?;
    if write_runs {
        for run in report.runs.iter().flatten() {
            let rd = dir.join("runs").join(run.run.to_string());
            fs::create_dir_all(&rd)?;
            save_abundances(&run.truth_abundances, rd.join("truth_abundances.csv"))?;
            for (l, a) in labels.iter().zip(&run.abundances) {
                if let Some(a) = a {
                    save_abundances(a, rd.join(format!("{l}_abundances.csv")))?;
                }
            }
            if let Some(lib) = &run.extracted {
                save_library(lib, rd.join("extracted_library.csv"))?;
            }
            let cells: Vec<_> = report
                .cells
                .iter()
                .filter(|c| c.run == run.run)
                .map(|c| {
                    json!({
                        "label": c.label,
                        "status": if c.outcome.is_ok() { "ok" } else { "failed" },
                        "error": c.outcome.as_ref().err(),
                    })
                })
                .collect();
            let meta = json!({ "run": run.run, "seed": run.seed, "cells": cells });
            fs::write(rd.join("run.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        }
    }
    Ok(())
}
