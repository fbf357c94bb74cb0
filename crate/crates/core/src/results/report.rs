//! Multi-run comparison report.
//!
//! Reads the `summary.json` of one or more run directories and produces a
//! per-strategy table of final worst-group, disparity, and group-average
//! values (standard and robust), aggregated as mean and population standard
//! deviation over seeds, plus per-strategy selection costs. Values are
//! passed through from the persisted reports; nothing is recomputed.

use crate::experiment::run::{InitReport, RoundReport};
use crate::experiment::ExperimentError;
use crate::selection::Strategy;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// The machine-readable payload of a completed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub rounds: u32,
    pub budget: usize,
    pub metric: String,
    pub labeled_initial: usize,
    pub labeled_final: usize,
    pub init: InitReport,
    pub round_reports: Vec<RoundReport>,
    pub complete: bool,
}

pub fn load_summary(dir: &Path) -> Result<RunSummary, ExperimentError> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", path.display())))
}

/// Mean and population standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn over(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "aggregate over no values");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Aggregate {
            mean,
            std: var.sqrt(),
        }
    }
}

impl std::fmt::Display for Aggregate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}\u{b1}{:.4}", self.mean, self.std)
    }
}

/// One table row: the test-split aggregates of a strategy's final round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub worst_standard: Aggregate,
    pub worst_robust: Aggregate,
    pub disparity_standard: Aggregate,
    pub disparity_robust: Aggregate,
    pub average_standard: Aggregate,
    pub average_robust: Aggregate,
    /// Mean per-round selection cost; for JIN this includes training the
    /// auxiliary standard model.
    pub selection_seconds: Aggregate,
    pub adv_train_seconds: Aggregate,
}

/// The full comparison: an initialization row plus one row per strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub rounds: u32,
    pub metric: String,
    pub init: ReportRow,
    pub strategies: Vec<ReportRow>,
}

fn require(cond: bool, message: &str) -> Result<(), ExperimentError> {
    if cond {
        Ok(())
    } else {
        Err(ExperimentError::Persist(message.to_string()))
    }
}

struct FairnessValues {
    worst_standard: Vec<f64>,
    worst_robust: Vec<f64>,
    disparity_standard: Vec<f64>,
    disparity_robust: Vec<f64>,
    average_standard: Vec<f64>,
    average_robust: Vec<f64>,
}

impl FairnessValues {
    fn new() -> Self {
        Self {
            worst_standard: vec![],
            worst_robust: vec![],
            disparity_standard: vec![],
            disparity_robust: vec![],
            average_standard: vec![],
            average_robust: vec![],
        }
    }

    fn push(&mut self, report: &crate::fairness::FairnessReport) -> Result<(), ExperimentError> {
        self.worst_standard.push(report.worst_standard);
        self.disparity_standard.push(report.disparity_standard);
        self.average_standard.push(report.average_standard);
        let (Some(w), Some(d), Some(a)) = (
            report.worst_robust,
            report.disparity_robust,
            report.average_robust,
        ) else {
            return Err(ExperimentError::Persist(
                "run lacks robust metrics; reports compare both sides".to_string(),
            ));
        };
        self.worst_robust.push(w);
        self.disparity_robust.push(d);
        self.average_robust.push(a);
        Ok(())
    }
}

fn row_from(
    strategy: String,
    seeds: Vec<u64>,
    values: &FairnessValues,
    selection: &[f64],
    adv: &[f64],
) -> ReportRow {
    ReportRow {
        strategy,
        runs: seeds.len(),
        seeds,
        worst_standard: Aggregate::over(&values.worst_standard),
        worst_robust: Aggregate::over(&values.worst_robust),
        disparity_standard: Aggregate::over(&values.disparity_standard),
        disparity_robust: Aggregate::over(&values.disparity_robust),
        average_standard: Aggregate::over(&values.average_standard),
        average_robust: Aggregate::over(&values.average_robust),
        selection_seconds: Aggregate::over(selection),
        adv_train_seconds: Aggregate::over(adv),
    }
}

/// Strategy display order: canonical order first, unknown names last.
fn strategy_rank(name: &str) -> usize {
    Strategy::all()
        .iter()
        .position(|s| s.as_str() == name)
        .unwrap_or(usize::MAX)
}

/// Aggregate summaries into the comparison table. All runs must share the
/// dataset, round count, and metric; each strategy contributes one row
/// aggregated over its seeds.
pub fn build_report(summaries: &[RunSummary]) -> Result<Report, ExperimentError> {
    require(!summaries.is_empty(), "no run summaries given")?;
    let first = &summaries[0];
    for s in summaries {
        require(
            s.dataset == first.dataset,
            &format!(
                "mismatched datasets: {} vs {}",
                s.dataset, first.dataset
            ),
        )?;
        require(
            s.rounds == first.rounds,
            &format!("mismatched round counts: {} vs {}", s.rounds, first.rounds),
        )?;
        require(
            s.metric == first.metric,
            &format!("mismatched metrics: {} vs {}", s.metric, first.metric),
        )?;
        require(
            s.round_reports.len() == s.rounds as usize,
            &format!(
                "incomplete run for strategy {} seed {}: {} of {} rounds",
                s.strategy,
                s.seed,
                s.round_reports.len(),
                s.rounds
            ),
        )?;
    }

    // Initialization does not depend on the strategy, so identical seeds
    // are deduplicated across runs.
    let mut inits: BTreeMap<u64, &InitReport> = BTreeMap::new();
    for s in summaries {
        inits.entry(s.seed).or_insert(&s.init);
    }
    let mut init_values = FairnessValues::new();
    let mut init_adv = Vec::new();
    let init_seeds: Vec<u64> = inits.keys().copied().collect();
    for init in inits.values() {
        init_values.push(&init.test)?;
        init_adv.push(init.adv_train_seconds);
    }
    let zeros = vec![0.0; init_seeds.len()];
    let init_row = row_from("INIT".to_string(), init_seeds, &init_values, &zeros, &init_adv);

    let mut by_strategy: BTreeMap<String, Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        by_strategy.entry(s.strategy.clone()).or_default().push(s);
    }
    let mut strategies = Vec::new();
    for (name, runs) in &by_strategy {
        let mut values = FairnessValues::new();
        let mut selection = Vec::new();
        let mut adv = Vec::new();
        let mut seeds = Vec::new();
        for run in runs {
            let last: &RoundReport = run
                .round_reports
                .last()
                .expect("completeness checked above");
            values.push(&last.after_test)?;
            let k = run.round_reports.len() as f64;
            selection.push(
                run.round_reports
                    .iter()
                    .map(|r| r.timing.selection_seconds)
                    .sum::<f64>()
                    / k,
            );
            adv.push(
                run.round_reports
                    .iter()
                    .map(|r| r.timing.adv_train_seconds)
                    .sum::<f64>()
                    / k,
            );
            seeds.push(run.seed);
        }
        seeds.sort_unstable();
        strategies.push(row_from(name.clone(), seeds, &values, &selection, &adv));
    }
    strategies.sort_by_key(|row| (strategy_rank(&row.strategy), row.strategy.clone()));

    Ok(Report {
        dataset: first.dataset.clone(),
        rounds: first.rounds,
        metric: first.metric.clone(),
        init: init_row,
        strategies,
    })
}

impl Report {
    /// Fixed-width text table; one line per strategy below the init line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "dataset: {}   rounds: {}   metric: {}",
            self.dataset, self.rounds, self.metric
        );
        let _ = writeln!(
            out,
            "{:<10} {:>4}  {:>15} {:>15} {:>15} {:>15} {:>15} {:>15} {:>12}",
            "strategy",
            "runs",
            "worst_std",
            "worst_rob",
            "disp_std",
            "disp_rob",
            "avg_std",
            "avg_rob",
            "sel_s"
        );
        let mut line = |row: &ReportRow| {
            let _ = writeln!(
                out,
                "{:<10} {:>4}  {:>15} {:>15} {:>15} {:>15} {:>15} {:>15} {:>12}",
                row.strategy,
                row.runs,
                row.worst_standard.to_string(),
                row.worst_robust.to_string(),
                row.disparity_standard.to_string(),
                row.disparity_robust.to_string(),
                row.average_standard.to_string(),
                row.average_robust.to_string(),
                format!("{:.3}", row.selection_seconds.mean),
            );
        };
        line(&self.init);
        for row in &self.strategies {
            line(row);
        }
        out
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        serde_json::to_string_pretty(self)
            .map_err(|e| ExperimentError::Persist(format!("serializing report: {e}")))
    }
}
