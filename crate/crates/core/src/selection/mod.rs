//! Acquisition strategies behind one interface: the joint-inconsistency
//! scorer plus the RAND, ENT, CSET, BADGE, and G-RAND baselines.
//!
//! Strategies never see ground-truth labels; they rank candidates using
//! model outputs, embeddings, and randomness only. Every strategy returns
//! exactly `min(budget, candidates)` distinct ids from the candidate set.

mod badge;
mod baselines;
mod coreset;
mod jin;

pub use badge::badge_select;
pub use baselines::{entropy_select, random_select};
pub use coreset::coreset_select;
pub use jin::{jin_select, score_robust_inconsistency, score_standard_inconsistency};

use crate::adversarial::{AdversarialError, AttackConfig};
use crate::data::{LabeledView, UnlabeledView};
use crate::model::{ClassifierSnapshot, ModelError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("budget must be >= 1")]
    ZeroBudget,
    #[error("strategy needs a standard model but none was provided")]
    MissingStandardModel,
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("candidate {0} appears more than once")]
    DuplicateCandidate(usize),
    #[error("robust inconsistency requires the label-free kl-to-benign attack")]
    WrongAttackObjective,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Adversarial(#[from] AdversarialError),
}

/// Acquisition strategy registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "JIN")]
    Jin,
    #[serde(rename = "RAND")]
    Rand,
    #[serde(rename = "ENT")]
    Ent,
    #[serde(rename = "CSET")]
    Cset,
    #[serde(rename = "BADGE")]
    Badge,
    #[serde(rename = "G-RAND")]
    GRand,
}

impl Strategy {
    pub fn parse(name: &str) -> Result<Self, SelectionError> {
        match name.to_ascii_uppercase().as_str() {
            "JIN" => Ok(Strategy::Jin),
            "RAND" => Ok(Strategy::Rand),
            "ENT" => Ok(Strategy::Ent),
            "CSET" => Ok(Strategy::Cset),
            "BADGE" => Ok(Strategy::Badge),
            "G-RAND" | "GRAND" => Ok(Strategy::GRand),
            other => Err(SelectionError::UnknownStrategy(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Jin => "JIN",
            Strategy::Rand => "RAND",
            Strategy::Ent => "ENT",
            Strategy::Cset => "CSET",
            Strategy::Badge => "BADGE",
            Strategy::GRand => "G-RAND",
        }
    }

    /// Whether candidates should be confined to the worst group. The other
    /// strategies rank the full unlabeled pool, matching their conventional
    /// definitions.
    pub fn group_scoped(self) -> bool {
        matches!(self, Strategy::Jin | Strategy::GRand)
    }

    /// Whether the strategy consumes an auxiliary standard-training model.
    pub fn needs_standard_model(self) -> bool {
        matches!(self, Strategy::Jin)
    }

    pub fn all() -> [Strategy; 6] {
        [
            Strategy::Jin,
            Strategy::Rand,
            Strategy::Ent,
            Strategy::Cset,
            Strategy::Badge,
            Strategy::GRand,
        ]
    }
}

/// Per-candidate scores from the joint-inconsistency ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: usize,
    /// KL between the standard and robust model predictions. Nonnegative.
    pub i_std: f64,
    /// KL between benign and attacked robust-model predictions. Nonnegative.
    pub i_rob: f64,
    /// Sum of the two normalized scores; may be negative.
    pub joint: f64,
}

/// Everything a strategy may consume for one acquisition round.
pub struct SelectionRequest<'a> {
    pub strategy: Strategy,
    /// Requested acquisition size; the result is clamped to the candidate
    /// count, never spilling outside the candidate set.
    pub budget: usize,
    pub round: u32,
    /// Round-scoped seed; all strategy randomness derives from it.
    pub seed: u64,
    /// Eligible ids (the worst-group subset for group-scoped strategies,
    /// the full unlabeled pool otherwise).
    pub candidates: &'a [usize],
    pub pool: &'a UnlabeledView<'a>,
    /// Labeled-pool view; CSET seeds its centers from these embeddings.
    pub labeled: &'a LabeledView<'a>,
    pub robust: &'a ClassifierSnapshot,
    pub standard: Option<&'a ClassifierSnapshot>,
    /// Scoring attack for the robust inconsistency term.
    pub attack: &'a AttackConfig,
}

/// Selected ids (ascending) plus, for the scoring strategy, one record per
/// candidate.
pub struct SelectionOutcome {
    pub selected: Vec<usize>,
    pub scores: Option<Vec<ScoreRecord>>,
}

impl<'a> SelectionRequest<'a> {
    pub(crate) fn validate(&self) -> Result<(), SelectionError> {
        if self.budget == 0 {
            return Err(SelectionError::ZeroBudget);
        }
        if self.candidates.is_empty() {
            return Err(SelectionError::EmptyCandidates);
        }
        let mut seen = BTreeSet::new();
        for &id in self.candidates {
            if !seen.insert(id) {
                return Err(SelectionError::DuplicateCandidate(id));
            }
        }
        Ok(())
    }

    /// Effective acquisition size after clamping to the candidate count.
    pub fn effective_budget(&self) -> usize {
        self.budget.min(self.candidates.len())
    }
}

/// Normalize scores to mean zero and population standard deviation one
/// over the candidate set; zero-variance input maps to all zeros.
pub fn normalize(scores: &[f64]) -> Vec<f64> {
    assert!(!scores.is_empty(), "normalize of an empty sequence");
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let variance = scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    if std == 0.0 {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|v| (v - mean) / std).collect()
}

/// Rank by score descending and take the top `budget`; ties break toward
/// the lower id. Returns ids sorted ascending.
pub(crate) fn top_by_score(ids: &[usize], scores: &[f64], budget: usize) -> Vec<usize> {
    debug_assert_eq!(ids.len(), scores.len());
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let mut selected: Vec<usize> = order
        .into_iter()
        .take(budget.min(ids.len()))
        .map(|i| ids[i])
        .collect();
    selected.sort_unstable();
    selected
}

/// Dispatch a request to its strategy. Group confinement is the caller's
/// job (candidates arrive pre-filtered); budget clamping happens here.
pub fn select(req: &SelectionRequest) -> Result<SelectionOutcome, SelectionError> {
    req.validate()?;
    if req.effective_budget() < req.budget {
        log::warn!(
            "round {}: budget {} exceeds {} candidates; clamping",
            req.round,
            req.budget,
            req.candidates.len()
        );
    }
    match req.strategy {
        Strategy::Jin => jin_select(req),
        Strategy::Rand | Strategy::GRand => random_select(req),
        Strategy::Ent => entropy_select(req),
        Strategy::Cset => coreset_select(req),
        Strategy::Badge => badge_select(req),
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::data::{DatasetBundle, PoolState};
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::model::{ArchSpec, Mlp, TrainingMode};

    pub fn toy_bundle(seed: u64, n: usize) -> (DatasetBundle, PoolState) {
        let spec = SyntheticSpec {
            name: "two-group-gaussians".to_string(),
            seed,
            n,
            params: Default::default(),
            splits: Default::default(),
        };
        let bundle = generate_synthetic(&spec).unwrap();
        let pool = PoolState::init(&bundle, 0.3, seed ^ 1).unwrap();
        (bundle, pool)
    }

    pub fn snapshot(bundle: &DatasetBundle, arch: &str, seed: u64) -> ClassifierSnapshot {
        let arch = ArchSpec::parse(arch).unwrap();
        let net = Mlp::init(&arch, bundle.feature_dim(), bundle.num_classes() as usize, seed);
        ClassifierSnapshot::new(net, TrainingMode::Robust, seed, 0)
    }
}
