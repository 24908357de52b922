//! End-to-end stages, experiment matrices and reports.

pub mod config;
pub mod layout;
pub mod matrix;
pub mod report;
pub mod stages;
pub mod synthesis;

pub use config::{Ablation, DataConfig, RunConfig, SynthesisConfig, TrainingConfig, Variant};
pub use layout::Layout;
pub use matrix::{run_matrix, summarize, summary_tsv, CellResult, RunReport, SummaryRow};
pub use report::{emit_report, parse_metrics, render_chart, ReportStats};
pub use stages::{EvalFile, MetricsLine, Pipeline, Stage, StageStatus};
pub use synthesis::{RoundStats, Synthesizer};
