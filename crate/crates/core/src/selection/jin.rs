//! Joint-inconsistency scoring.
//!
//! Each candidate gets two nonnegative scores: disagreement between the
//! auxiliary standard model and the robust model on the clean input, and
//! the robust model's own disagreement between the clean input and its
//! attacked version. Both are normalized over the candidate set and summed;
//! the highest joint scores are acquired.

use super::{ScoreRecord, SelectionError, SelectionOutcome, SelectionRequest};
use crate::adversarial::{pgd_attack, AttackConfig, AttackObjective};
use crate::model::{kl_divergence, ClassifierSnapshot};
use crate::seeds;
use ndarray::Array2;

/// Standard inconsistency per row: KL(p(x, standard) || p(x, robust)).
pub fn score_standard_inconsistency(
    standard: &ClassifierSnapshot,
    robust: &ClassifierSnapshot,
    x: &Array2<f64>,
) -> Result<Vec<f64>, SelectionError> {
    let p = standard.predict_rows(x)?;
    let q = robust.predict_rows(x)?;
    p.iter()
        .zip(&q)
        .map(|(pi, qi)| kl_divergence(pi, qi).map_err(SelectionError::from))
        .collect()
}

/// Robust inconsistency per row: KL(p(x, robust) || p(attacked x, robust)).
///
/// The attack must be the label-free kl-to-benign objective; candidate
/// labels are hidden at scoring time. One seed per row keeps the attack's
/// random start reproducible per (round, id).
pub fn score_robust_inconsistency(
    robust: &ClassifierSnapshot,
    x: &Array2<f64>,
    attack: &AttackConfig,
    row_seeds: &[u64],
) -> Result<Vec<f64>, SelectionError> {
    if attack.objective != AttackObjective::KlToBenign {
        return Err(SelectionError::WrongAttackObjective);
    }
    let adv = pgd_attack(robust, x, None, attack, row_seeds)?;
    let p = robust.predict_rows(x)?;
    let q = robust.predict_rows(&adv)?;
    p.iter()
        .zip(&q)
        .map(|(pi, qi)| kl_divergence(pi, qi).map_err(SelectionError::from))
        .collect()
}

/// Score every candidate, normalize both score vectors over the candidate
/// set, and take the top joint scores (ties toward the lower id).
pub fn jin_select(req: &SelectionRequest) -> Result<SelectionOutcome, SelectionError> {
    req.validate()?;
    let standard = req.standard.ok_or(SelectionError::MissingStandardModel)?;
    let x = req.pool.features_of(req.candidates);

    let i_std = score_standard_inconsistency(standard, req.robust, &x)?;
    let row_seeds: Vec<u64> = req
        .candidates
        .iter()
        .map(|&id| {
            seeds::derive(
                req.seed,
                seeds::tag::SCORE_ATTACK,
                &[req.round as u64, id as u64],
            )
        })
        .collect();
    let i_rob = score_robust_inconsistency(req.robust, &x, req.attack, &row_seeds)?;

    let n_std = super::normalize(&i_std);
    let n_rob = super::normalize(&i_rob);
    let joint: Vec<f64> = n_std.iter().zip(&n_rob).map(|(a, b)| a + b).collect();

    let scores: Vec<ScoreRecord> = req
        .candidates
        .iter()
        .enumerate()
        .map(|(row, &id)| ScoreRecord {
            id,
            i_std: i_std[row],
            i_rob: i_rob[row],
            joint: joint[row],
        })
        .collect();
    let selected = super::top_by_score(req.candidates, &joint, req.effective_budget());
    Ok(SelectionOutcome {
        selected,
        scores: Some(scores),
    })
}
