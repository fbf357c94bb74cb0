//! Hybrid baseline: k-means++ seeding over last-layer gradient embeddings.
//!
//! Each candidate is embedded as the gradient of the cross-entropy loss at
//! its argmax pseudo-label with respect to the final linear layer, which is
//! the outer product of (p - onehot(argmax p)) and the penultimate
//! activation. Confident samples produce small gradients, uncertain ones
//! large gradients, so k-means++ seeding mixes uncertainty and diversity.

use super::{SelectionError, SelectionOutcome, SelectionRequest};
use crate::model::softmax_rows;
use crate::seeds;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn argmax_row(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn gradient_embeddings(probs: &Array2<f64>, penultimate: &Array2<f64>) -> Array2<f64> {
    let n = probs.nrows();
    let classes = probs.ncols();
    let hidden = penultimate.ncols();
    let mut out = Array2::zeros((n, classes * hidden));
    for i in 0..n {
        let row = probs.row(i);
        let pseudo = argmax_row(row);
        for c in 0..classes {
            let delta = row[c] - if c == pseudo { 1.0 } else { 0.0 };
            for j in 0..hidden {
                out[[i, c * hidden + j]] = delta * penultimate[[i, j]];
            }
        }
    }
    out
}

fn squared_distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// k-means++ seeding: uniform first center, then each center sampled with
/// probability proportional to the squared distance to the nearest chosen
/// center. The proportional draw walks cumulative sums in ascending id
/// order; when every remaining point coincides with a center the lowest
/// unchosen id is taken. `ids` must be strictly ascending so that the walk
/// order is well defined.
pub(crate) fn kmeans_pp_seeding(
    ids: &[usize],
    embeddings: &Array2<f64>,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    debug_assert!(ids.windows(2).all(|w| w[0] < w[1]), "ids must be sorted");
    let n = ids.len();
    let take = budget.min(n);
    let mut chosen = vec![false; n];
    let mut selected = Vec::with_capacity(take);
    if take == 0 {
        return selected;
    }

    let first = rng.gen_range(0..n);
    chosen[first] = true;
    selected.push(ids[first]);
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(embeddings.row(i), embeddings.row(first)))
        .collect();

    while selected.len() < take {
        let total: f64 = (0..n).filter(|&i| !chosen[i]).map(|i| min_d2[i]).sum();
        let pick = if total > 0.0 {
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut hit = None;
            for i in 0..n {
                if chosen[i] {
                    continue;
                }
                acc += min_d2[i];
                if u < acc {
                    hit = Some(i);
                    break;
                }
            }
            // Floating-point edge: u landed at the very top of the last
            // bucket; take the highest-id unchosen point, the one the walk
            // ended on.
            hit.unwrap_or_else(|| (0..n).rev().find(|&i| !chosen[i]).expect("take < n"))
        } else {
            (0..n).find(|&i| !chosen[i]).expect("take < n")
        };
        chosen[pick] = true;
        selected.push(ids[pick]);
        for i in 0..n {
            if !chosen[i] {
                let d2 = squared_distance(embeddings.row(i), embeddings.row(pick));
                if d2 < min_d2[i] {
                    min_d2[i] = d2;
                }
            }
        }
    }
    selected.sort_unstable();
    selected
}

pub fn badge_select(req: &SelectionRequest) -> Result<SelectionOutcome, SelectionError> {
    req.validate()?;
    let mut ids = req.candidates.to_vec();
    ids.sort_unstable();
    let x = req.pool.features_of(&ids);
    let net = req.robust.network();
    net.check_input(&x)?;
    let trace = net.forward(&x);
    let probs = softmax_rows(trace.logits());
    let embeddings = gradient_embeddings(&probs, trace.penultimate());
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
        req.seed,
        seeds::tag::SELECTION,
        &[req.round as u64],
    ));
    let selected = kmeans_pp_seeding(&ids, &embeddings, req.effective_budget(), &mut rng);
    Ok(SelectionOutcome {
        selected,
        scores: None,
    })
}
