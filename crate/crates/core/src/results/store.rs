//! Incremental run-directory writer.
//!
//! The store is an observer of the experiment loop: every row is flushed as
//! soon as its round completes, so a killed run leaves all finished rounds
//! parseable. `summary.json` is written only by [`ResultsStore::finalize`];
//! its absence marks an incomplete run.

use super::report::RunSummary;
use crate::data::Split;
use crate::experiment::run::{InitContext, InitReport, RoundContext, RoundReport, RunObserver};
use crate::experiment::{ExperimentConfig, ExperimentError, RunResult};
use crate::fairness::{per_class_outcomes, FairnessReport};
use crate::model::io::save_snapshot;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

/// Fixed column order of `metrics.csv`. Row 0 is the initialization state;
/// rows 1..=K hold each round's post-retraining evaluation. `worst_group`
/// is empty in row 0 (no selection happened yet) and robust columns are
/// empty when evaluation ran without an attack.
pub const METRICS_COLUMNS: [&str; 19] = [
    "round",
    "labeled",
    "worst_group",
    "selected",
    "val_worst_std",
    "val_worst_rob",
    "val_disp_std",
    "val_disp_rob",
    "val_avg_std",
    "val_avg_rob",
    "test_worst_std",
    "test_worst_rob",
    "test_disp_std",
    "test_disp_rob",
    "test_avg_std",
    "test_avg_rob",
    "selection_seconds",
    "std_train_seconds",
    "adv_train_seconds",
];

/// Columns of each `scores/round_NN.csv`. JIN writes one row per candidate
/// with its scores; baselines write the selected rows with empty score
/// cells.
pub const SCORE_COLUMNS: [&str; 6] = ["id", "group", "i_std", "i_rob", "joint", "selected"];

pub const PER_CLASS_COLUMNS: [&str; 5] = ["round", "class", "standard", "robust", "count"];
pub const TIMING_COLUMNS: [&str; 4] = [
    "round",
    "selection_seconds",
    "std_train_seconds",
    "adv_train_seconds",
];
pub const ACQUISITION_COLUMNS: [&str; 4] = ["round", "id", "group", "label"];

fn persist_err(path: &Path, err: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Persist(format!("{}: {err}", path.display()))
}

fn open_csv(path: &Path, columns: &[&str]) -> Result<csv::Writer<File>, ExperimentError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| persist_err(path, e))?;
    writer
        .write_record(columns)
        .and_then(|()| writer.flush().map_err(Into::into))
        .map_err(|e| persist_err(path, e))?;
    Ok(writer)
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug)]
pub struct ResultsStore {
    dir: PathBuf,
    metrics: csv::Writer<File>,
    per_class: csv::Writer<File>,
    timing: csv::Writer<File>,
    acquisitions: csv::Writer<File>,
    init: Option<InitReport>,
    rounds: Vec<RoundReport>,
}

impl ResultsStore {
    /// Create the directory layout and write both config artifacts:
    /// `config.toml` is the input text byte for byte, `config.resolved.toml`
    /// the effective config after overrides.
    pub fn create(
        dir: &Path,
        config_text: &str,
        resolved: &ExperimentConfig,
    ) -> Result<Self, ExperimentError> {
        if dir.join("metrics.csv").exists() {
            return Err(ExperimentError::Persist(format!(
                "{} already contains results",
                dir.display()
            )));
        }
        fs::create_dir_all(dir.join("scores")).map_err(|e| persist_err(dir, e))?;
        fs::create_dir_all(dir.join("snapshots")).map_err(|e| persist_err(dir, e))?;
        fs::write(dir.join("config.toml"), config_text)
            .map_err(|e| persist_err(&dir.join("config.toml"), e))?;
        let resolved_text = toml::to_string_pretty(resolved)
            .map_err(|e| ExperimentError::Persist(format!("serializing config: {e}")))?;
        fs::write(dir.join("config.resolved.toml"), resolved_text)
            .map_err(|e| persist_err(&dir.join("config.resolved.toml"), e))?;

        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: open_csv(&dir.join("metrics.csv"), &METRICS_COLUMNS)?,
            per_class: open_csv(&dir.join("per_class.csv"), &PER_CLASS_COLUMNS)?,
            timing: open_csv(&dir.join("timing.csv"), &TIMING_COLUMNS)?,
            acquisitions: open_csv(&dir.join("acquisitions.csv"), &ACQUISITION_COLUMNS)?,
            init: None,
            rounds: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    #[allow(clippy::too_many_arguments)]
    fn metrics_row(
        &mut self,
        round: u32,
        labeled: usize,
        worst_group: Option<u32>,
        selected: usize,
        val: &FairnessReport,
        test: &FairnessReport,
        timing: (f64, f64, f64),
    ) -> Result<(), ExperimentError> {
        let path = self.dir.join("metrics.csv");
        let record = [
            round.to_string(),
            labeled.to_string(),
            worst_group.map(|g| g.to_string()).unwrap_or_default(),
            selected.to_string(),
            val.worst_standard.to_string(),
            fmt_opt(val.worst_robust),
            val.disparity_standard.to_string(),
            fmt_opt(val.disparity_robust),
            val.average_standard.to_string(),
            fmt_opt(val.average_robust),
            test.worst_standard.to_string(),
            fmt_opt(test.worst_robust),
            test.disparity_standard.to_string(),
            fmt_opt(test.disparity_robust),
            test.average_standard.to_string(),
            fmt_opt(test.average_robust),
            timing.0.to_string(),
            timing.1.to_string(),
            timing.2.to_string(),
        ];
        self.metrics
            .write_record(&record)
            .and_then(|()| self.metrics.flush().map_err(Into::into))
            .map_err(|e| persist_err(&path, e))
    }

    fn timing_row(&mut self, round: u32, timing: (f64, f64, f64)) -> Result<(), ExperimentError> {
        let path = self.dir.join("timing.csv");
        self.timing
            .write_record(&[
                round.to_string(),
                timing.0.to_string(),
                timing.1.to_string(),
                timing.2.to_string(),
            ])
            .and_then(|()| self.timing.flush().map_err(Into::into))
            .map_err(|e| persist_err(&path, e))
    }

    fn per_class_rows(&mut self, round: u32, ctx_model: &crate::model::ClassifierSnapshot, ctx: &ExperimentConfig, bundle: &crate::data::DatasetBundle) -> Result<(), ExperimentError> {
        let path = self.dir.join("per_class.csv");
        let by_class = per_class_outcomes(
            ctx_model,
            bundle,
            Split::Test,
            Some((&ctx.eval_attack, ctx.seed)),
        )?;
        for (class, outcome) in by_class {
            self.per_class
                .write_record(&[
                    round.to_string(),
                    class.to_string(),
                    outcome.standard.to_string(),
                    fmt_opt(outcome.robust),
                    outcome.count.to_string(),
                ])
                .map_err(|e| persist_err(&path, e))?;
        }
        self.per_class.flush().map_err(|e| persist_err(&path, e))
    }

    fn snapshot(&self, round: u32, model: &crate::model::ClassifierSnapshot) -> Result<(), ExperimentError> {
        let path = self.dir.join("snapshots").join(format!("round_{round:02}.model"));
        save_snapshot(&path, model).map_err(|e| persist_err(&path, e))?;
        Ok(())
    }

    fn scores_file(&self, report: &RoundReport, bundle: &crate::data::DatasetBundle) -> Result<(), ExperimentError> {
        let path = self
            .dir
            .join("scores")
            .join(format!("round_{:02}.csv", report.round));
        let mut writer = open_csv(&path, &SCORE_COLUMNS)?;
        match &report.scores {
            Some(scores) => {
                let mut rows = scores.clone();
                rows.sort_by_key(|r| r.id);
                for record in rows {
                    let selected = report.selected.binary_search(&record.id).is_ok();
                    writer
                        .write_record(&[
                            record.id.to_string(),
                            bundle.group_of(record.id).to_string(),
                            record.i_std.to_string(),
                            record.i_rob.to_string(),
                            record.joint.to_string(),
                            u8::from(selected).to_string(),
                        ])
                        .map_err(|e| persist_err(&path, e))?;
                }
            }
            None => {
                for (&id, &group) in report.selected.iter().zip(&report.selected_groups) {
                    writer
                        .write_record(&[
                            id.to_string(),
                            group.to_string(),
                            String::new(),
                            String::new(),
                            String::new(),
                            "1".to_string(),
                        ])
                        .map_err(|e| persist_err(&path, e))?;
                }
            }
        }
        writer.flush().map_err(|e| persist_err(&path, e))
    }

    /// Write `summary.json`. Consumes the store: a finalized directory is
    /// complete and receives no further rows.
    pub fn finalize(
        mut self,
        config: &ExperimentConfig,
        result: &RunResult,
    ) -> Result<PathBuf, ExperimentError> {
        let init = self
            .init
            .take()
            .ok_or_else(|| ExperimentError::Persist("finalize before initialization".into()))?;
        let summary = RunSummary {
            dataset: config.dataset.describe(),
            strategy: config.strategy.as_str().to_string(),
            seed: config.seed,
            rounds: config.rounds,
            budget: result.budget,
            metric: config.metric.as_str().to_string(),
            labeled_initial: init.labeled,
            labeled_final: result.pool.num_labeled(),
            init,
            round_reports: self.rounds,
            complete: true,
        };
        let path = self.dir.join("summary.json");
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| ExperimentError::Persist(format!("serializing summary: {e}")))?;
        fs::write(&path, json).map_err(|e| persist_err(&path, e))?;
        Ok(path)
    }
}

impl RunObserver for ResultsStore {
    fn on_init(&mut self, ctx: &InitContext) -> Result<(), ExperimentError> {
        self.metrics_row(
            0,
            ctx.report.labeled,
            None,
            0,
            &ctx.report.validation,
            &ctx.report.test,
            (0.0, 0.0, ctx.report.adv_train_seconds),
        )?;
        self.timing_row(0, (0.0, 0.0, ctx.report.adv_train_seconds))?;
        self.per_class_rows(0, ctx.model, ctx.config, ctx.bundle)?;
        self.snapshot(0, ctx.model)?;
        self.init = Some(ctx.report.clone());
        Ok(())
    }

    fn on_round(&mut self, ctx: &RoundContext) -> Result<(), ExperimentError> {
        let report = ctx.report;
        let timing = (
            report.timing.selection_seconds,
            report.timing.std_train_seconds,
            report.timing.adv_train_seconds,
        );
        self.metrics_row(
            report.round,
            report.labeled_after,
            Some(report.worst_group),
            report.selected.len(),
            &report.after_validation,
            &report.after_test,
            timing,
        )?;
        self.timing_row(report.round, timing)?;
        self.per_class_rows(report.round, ctx.model, ctx.config, ctx.bundle)?;
        self.scores_file(report, ctx.bundle)?;

        let acq_path = self.dir.join("acquisitions.csv");
        for (&id, &group) in report.selected.iter().zip(&report.selected_groups) {
            let label = ctx
                .bundle
                .label_of(id)
                .expect("acquired samples carry ground truth");
            self.acquisitions
                .write_record(&[
                    report.round.to_string(),
                    id.to_string(),
                    group.to_string(),
                    label.to_string(),
                ])
                .map_err(|e| persist_err(&acq_path, e))?;
        }
        self.acquisitions
            .flush()
            .map_err(|e| persist_err(&acq_path, e))?;

        self.snapshot(report.round, ctx.model)?;
        // The summary keeps per-round metrics; candidate scores stay in
        // their CSV files.
        let mut stripped = report.clone();
        stripped.scores = None;
        self.rounds.push(stripped);
        Ok(())
    }
}
