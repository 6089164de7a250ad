//! Monte Carlo benchmark: synthesise, extract, unmix, score, report.

mod align;
mod config;
mod eval;
mod report;
mod run;

pub use align::{align_library, angle_cost, hungarian};
pub use config::{BenchConfig, LibrarySource, RosterEntry};
pub use eval::{eval_result, eval_target, EvalTarget, Metrics};
pub use report::{cells_csv, report_csv, report_markdown, timing_csv, write_report};
pub use run::{run_bench, Aggregate, BenchReport, Cell, EntrySummary, RunArtifacts};
