//! Result persistence and presentation: the run directory layout, the
//! multi-run comparison report, and SVG plots.
//!
//! A run directory is written incrementally while the loop executes, so
//! every completed round stays parseable if the process dies mid-run:
//!
//! ```text
//! <run>/
//!   config.toml           byte-identical copy of the input config text
//!   config.resolved.toml  effective config after command-line overrides
//!   metrics.csv           one row per round plus the initialization row
//!   per_class.csv         per-class test accuracy per round
//!   timing.csv            wall-clock seconds per phase per round
//!   acquisitions.csv      round, id, group, label of every acquired sample
//!   scores/round_NN.csv   per-candidate scores (JIN) or the selected set
//!   snapshots/round_NN.model
//!   summary.json          machine-readable report, written on completion
//!   plots/*.svg           on demand via the plot command
//! ```

pub mod plot;
pub mod report;
pub mod store;
mod svg;

pub use plot::{
    plot, plot_label_distribution, plot_metric_curves, plot_per_class_bars, read_label_histogram,
    PlotKind,
};
pub use report::{build_report, load_summary, Aggregate, Report, ReportRow, RunSummary};
pub use store::ResultsStore;
