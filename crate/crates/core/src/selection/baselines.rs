//! Sampling baselines: seeded uniform selection (over the full pool or the
//! worst-group subset, depending on the request) and max-entropy
//! uncertainty selection.

use super::{SelectionError, SelectionOutcome, SelectionRequest};
use crate::model::PROB_FLOOR;
use crate::seeds;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Uniform selection without replacement from the candidate set. Serves
/// both the full-pool and the worst-group variant; the difference is purely
/// which candidates the caller passes.
pub fn random_select(req: &SelectionRequest) -> Result<SelectionOutcome, SelectionError> {
    req.validate()?;
    let mut order: Vec<usize> = req.candidates.to_vec();
    order.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
        req.seed,
        seeds::tag::SELECTION,
        &[req.round as u64],
    ));
    order.shuffle(&mut rng);
    let mut selected: Vec<usize> = order.into_iter().take(req.effective_budget()).collect();
    selected.sort_unstable();
    Ok(SelectionOutcome {
        selected,
        scores: None,
    })
}

/// Shannon entropy of the robust model's prediction, highest first.
pub fn entropy_select(req: &SelectionRequest) -> Result<SelectionOutcome, SelectionError> {
    req.validate()?;
    let x = req.pool.features_of(req.candidates);
    let probs = req.robust.predict_proba(&x)?;
    let entropies: Vec<f64> = probs
        .rows()
        .into_iter()
        .map(|row| -row.iter().map(|&p| p * p.max(PROB_FLOOR).ln()).sum::<f64>())
        .collect();
    let selected = super::top_by_score(req.candidates, &entropies, req.effective_budget());
    Ok(SelectionOutcome {
        selected,
        scores: None,
    })
}
