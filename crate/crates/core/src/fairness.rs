//! Group-conditioned evaluation: per-group standard and robust metrics,
//! minimax aggregates, and worst-group identification.
//!
//! Fairness here is worst-case, not average-case: the quantities that drive
//! the acquisition loop are the minimum metric over sensitive groups and the
//! max-minus-min disparity, under both benign and attacked inputs.

use crate::adversarial::{pgd_attack, AdversarialError, AttackConfig, AttackObjective};
use crate::data::{DatasetBundle, Split};
use crate::model::{ClassifierSnapshot, ModelError};
use crate::seeds;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("no groups present in the evaluated split")]
    NoGroups,
    #[error("robust metrics were not computed; evaluate with an attack first")]
    RobustUnavailable,
    #[error("attack objective {0:?} is not usable for evaluation")]
    BadObjective(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Adversarial(#[from] AdversarialError),
}

/// Metric computed within each group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Accuracy,
    MacroF1,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::MacroF1 => "macro-f1",
        }
    }
}

impl Default for MetricKind {
    fn default() -> Self {
        MetricKind::Accuracy
    }
}

/// Which metric ranks groups when picking the worst one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorstGroupMode {
    Standard,
    Robust,
    /// Mean of the standard and robust metric.
    Mean,
}

impl Default for WorstGroupMode {
    fn default() -> Self {
        WorstGroupMode::Robust
    }
}

/// One group's evaluation outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub standard: f64,
    /// Metric under attack; `None` when evaluation ran without one.
    pub robust: Option<f64>,
    /// Number of evaluated examples in the group.
    pub count: usize,
}

/// Per-group metrics for one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub kind: MetricKind,
    pub per_group: BTreeMap<u32, GroupOutcome>,
}

/// Scalar aggregates of a [`GroupMetrics`]: minimax values, disparities,
/// and unweighted group means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub kind: MetricKind,
    pub worst_standard: f64,
    pub worst_robust: Option<f64>,
    pub disparity_standard: f64,
    pub disparity_robust: Option<f64>,
    pub average_standard: f64,
    pub average_robust: Option<f64>,
}

/// Fraction of matching predictions. Empty input is a contract violation
/// upstream; the bundle guarantees nonempty groups per split.
pub fn accuracy(predictions: &[u32], truth: &[u32]) -> f64 {
    assert_eq!(predictions.len(), truth.len());
    assert!(!truth.is_empty(), "accuracy over an empty set");
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Macro-averaged F1 over all `num_classes` classes.
///
/// Every class contributes to the mean, including classes with no true or
/// predicted samples; all 0/0 ratios resolve to zero, so absent classes
/// pull the average down rather than being skipped.
pub fn macro_f1(predictions: &[u32], truth: &[u32], num_classes: u32) -> f64 {
    assert_eq!(predictions.len(), truth.len());
    assert!(!truth.is_empty(), "macro-F1 over an empty set");
    let c = num_classes as usize;
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut fn_ = vec![0usize; c];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p == t {
            tp[t as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut total = 0.0;
    for class in 0..c {
        let precision = ratio(tp[class], tp[class] + fp[class]);
        let recall = ratio(tp[class], tp[class] + fn_[class]);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        total += f1;
    }
    total / c as f64
}

fn metric(kind: MetricKind, predictions: &[u32], truth: &[u32], num_classes: u32) -> f64 {
    match kind {
        MetricKind::Accuracy => accuracy(predictions, truth),
        MetricKind::MacroF1 => macro_f1(predictions, truth, num_classes),
    }
}

/// Standard and attacked predictions with ground truth for one split.
fn split_predictions(
    model: &ClassifierSnapshot,
    bundle: &DatasetBundle,
    split: Split,
    attack: Option<(&AttackConfig, u64)>,
) -> Result<(Vec<u32>, Vec<u32>, Option<Vec<u32>>), FairnessError> {
    let ids = bundle.split_ids(split);
    let x = bundle.features_matrix(ids);
    let truth: Vec<u32> = ids
        .iter()
        .map(|&id| bundle.label_of(id).expect("evaluation splits are labeled"))
        .collect();

    let standard_preds = model.predict_labels(&x)?;
    let robust_preds = match attack {
        Some((cfg, seed)) => {
            if cfg.objective != AttackObjective::CrossEntropy {
                return Err(FairnessError::BadObjective(format!("{:?}", cfg.objective)));
            }
            let row_seeds: Vec<u64> = ids
                .iter()
                .map(|&id| seeds::derive(seed, seeds::tag::EVAL_ATTACK, &[id as u64]))
                .collect();
            let adv = pgd_attack(model, &x, Some(&truth), cfg, &row_seeds)?;
            Some(model.predict_labels(&adv)?)
        }
        None => None,
    };
    Ok((truth, standard_preds, robust_preds))
}

/// Evaluate a model per group on one split.
///
/// With `attack = Some((cfg, seed))` every example is additionally attacked
/// (per-row seeds derive from `seed` and the example id) and the robust
/// metric is filled in; the attack must be label-driven. With `None` only
/// standard metrics are computed.
pub fn evaluate_groups(
    model: &ClassifierSnapshot,
    bundle: &DatasetBundle,
    split: Split,
    kind: MetricKind,
    attack: Option<(&AttackConfig, u64)>,
) -> Result<GroupMetrics, FairnessError> {
    let ids = bundle.split_ids(split);
    let (truth, standard_preds, robust_preds) = split_predictions(model, bundle, split, attack)?;

    let mut group_rows: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &id) in ids.iter().enumerate() {
        group_rows.entry(bundle.group_of(id)).or_default().push(row);
    }
    if group_rows.is_empty() {
        return Err(FairnessError::NoGroups);
    }

    let pick = |rows: &[usize], source: &[u32]| -> Vec<u32> {
        rows.iter().map(|&r| source[r]).collect()
    };
    let mut per_group = BTreeMap::new();
    for (group, rows) in &group_rows {
        let truth_g = pick(rows, &truth);
        let std_g = pick(rows, &standard_preds);
        let standard = metric(kind, &std_g, &truth_g, bundle.num_classes());
        let robust = robust_preds.as_ref().map(|preds| {
            let rob_g = pick(rows, preds);
            metric(kind, &rob_g, &truth_g, bundle.num_classes())
        });
        per_group.insert(
            *group,
            GroupOutcome {
                standard,
                robust,
                count: rows.len(),
            },
        );
    }
    Ok(GroupMetrics { kind, per_group })
}

/// Per-class accuracy on one split, keyed by true class. The outcome shape
/// is shared with the per-group evaluation: `standard` and `robust` hold the
/// within-class accuracy and `count` the class support.
pub fn per_class_outcomes(
    model: &ClassifierSnapshot,
    bundle: &DatasetBundle,
    split: Split,
    attack: Option<(&AttackConfig, u64)>,
) -> Result<BTreeMap<u32, GroupOutcome>, FairnessError> {
    let (truth, standard_preds, robust_preds) = split_predictions(model, bundle, split, attack)?;

    let mut class_rows: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &label) in truth.iter().enumerate() {
        class_rows.entry(label).or_default().push(row);
    }
    let hits = |rows: &[usize], preds: &[u32]| -> f64 {
        let hit = rows.iter().filter(|&&r| preds[r] == truth[r]).count();
        hit as f64 / rows.len() as f64
    };
    let mut out = BTreeMap::new();
    for (class, rows) in &class_rows {
        out.insert(
            *class,
            GroupOutcome {
                standard: hits(rows, &standard_preds),
                robust: robust_preds.as_ref().map(|preds| hits(rows, preds)),
                count: rows.len(),
            },
        );
    }
    Ok(out)
}

/// Fold per-group outcomes into minimax, disparity, and mean aggregates.
/// Robust aggregates appear only when every group has a robust value.
pub fn aggregate(metrics: &GroupMetrics) -> Result<FairnessReport, FairnessError> {
    if metrics.per_group.is_empty() {
        return Err(FairnessError::NoGroups);
    }
    let standards: Vec<f64> = metrics.per_group.values().map(|o| o.standard).collect();
    let robusts: Option<Vec<f64>> = metrics.per_group.values().map(|o| o.robust).collect();
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(FairnessReport {
        kind: metrics.kind,
        worst_standard: min(&standards),
        worst_robust: robusts.as_deref().map(min),
        disparity_standard: max(&standards) - min(&standards),
        disparity_robust: robusts.as_deref().map(|v| max(v) - min(v)),
        average_standard: mean(&standards),
        average_robust: robusts.as_deref().map(mean),
    })
}

/// The group the loop should target next: the one with the lowest metric
/// under `mode`. Ties break toward the lower standard metric, then the
/// lowest group id.
pub fn worst_group(metrics: &GroupMetrics, mode: WorstGroupMode) -> Result<u32, FairnessError> {
    if metrics.per_group.is_empty() {
        return Err(FairnessError::NoGroups);
    }
    let score_of = |outcome: &GroupOutcome| -> Result<f64, FairnessError> {
        match mode {
            WorstGroupMode::Standard => Ok(outcome.standard),
            WorstGroupMode::Robust => outcome.robust.ok_or(FairnessError::RobustUnavailable),
            WorstGroupMode::Mean => {
                let robust = outcome.robust.ok_or(FairnessError::RobustUnavailable)?;
                Ok((outcome.standard + robust) / 2.0)
            }
        }
    };
    let mut best: Option<(u32, f64, f64)> = None;
    // Ascending id order makes "keep the incumbent" the lowest-id rule.
    for (&group, outcome) in &metrics.per_group {
        let score = score_of(outcome)?;
        let replace = match &best {
            None => true,
            Some((_, best_score, best_std)) => {
                score < *best_score
                    || (score == *best_score && outcome.standard < *best_std)
            }
        };
        if replace {
            best = Some((group, score, outcome.standard));
        }
    }
    Ok(best.expect("nonempty map").0)
}
