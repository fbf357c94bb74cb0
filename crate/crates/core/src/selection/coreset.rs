//! Diversity baseline: greedy k-center selection in the robust model's
//! penultimate-layer embedding space, seeded with the embeddings of the
//! already-labeled pool so new picks cover territory the labeled set
//! does not.

use super::{SelectionError, SelectionOutcome, SelectionRequest};
use ndarray::{Array2, ArrayView1};

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Greedy max-min selection: repeatedly take the candidate farthest from
/// every center (labeled embeddings plus previous picks). Ties break toward
/// the lower id. Returns ids sorted ascending.
pub(crate) fn k_center_greedy(
    ids: &[usize],
    candidate_embeddings: &Array2<f64>,
    labeled_embeddings: &Array2<f64>,
    budget: usize,
) -> Vec<usize> {
    let n = ids.len();
    debug_assert_eq!(candidate_embeddings.nrows(), n);
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| {
            labeled_embeddings
                .rows()
                .into_iter()
                .map(|center| squared_distance(candidate_embeddings.row(i), center))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut taken = vec![false; n];
    let mut selected = Vec::with_capacity(budget.min(n));
    for _ in 0..budget.min(n) {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    if min_d2[i] > min_d2[b] || (min_d2[i] == min_d2[b] && ids[i] < ids[b]) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let chosen = best.expect("budget clamped to candidate count");
        taken[chosen] = true;
        selected.push(ids[chosen]);
        for i in 0..n {
            if !taken[i] {
                let d2 = squared_distance(
                    candidate_embeddings.row(i),
                    candidate_embeddings.row(chosen),
                );
                if d2 < min_d2[i] {
                    min_d2[i] = d2;
                }
            }
        }
    }
    selected.sort_unstable();
    selected
}

pub fn coreset_select(req: &SelectionRequest) -> Result<SelectionOutcome, SelectionError> {
    req.validate()?;
    let net = req.robust.network();
    net.check_input(&req.pool.features_of(&req.candidates[..1]))?;
    let candidate_embeddings = net.penultimate(&req.pool.features_of(req.candidates));
    let labeled_embeddings = net.penultimate(&req.labeled.features());
    let selected = k_center_greedy(
        req.candidates,
        &candidate_embeddings,
        &labeled_embeddings,
        req.effective_budget(),
    );
    Ok(SelectionOutcome {
        selected,
        scores: None,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{SelectionRequest, Strategy};
    use super::*;
    use crate::adversarial::AttackConfig;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn picks_the_farthest_point_from_labeled_centers() {
        // 1-D embeddings 0, 1, 10 with a labeled center at 0: the point at
        // 10 maximizes the distance to the nearest center.
        let ids = [100, 200, 300];
        let cands = array![[0.0], [1.0], [10.0]];
        let labeled = array![[0.0]];
        assert_eq!(k_center_greedy(&ids, &cands, &labeled, 1), vec![300]);
        // With budget 2, the next-farthest point from {0, 10} is 1 (distance
        // 1 to center 0) versus 0 (distance 0), so 200 joins.
        assert_eq!(k_center_greedy(&ids, &cands, &labeled, 2), vec![200, 300]);
    }

    #[test]
    fn equidistant_ties_take_the_lower_id() {
        let ids = [7, 3];
        let cands = array![[1.0], [-1.0]];
        let labeled = array![[0.0]];
        assert_eq!(k_center_greedy(&ids, &cands, &labeled, 1), vec![3]);
    }

    #[test]
    fn empty_labeled_set_still_selects() {
        let ids = [1, 2];
        let cands = array![[0.0], [5.0]];
        let labeled = Array2::<f64>::zeros((0, 1));
        // All distances start infinite; the tie resolves to the lowest id,
        // then the second pick is the farthest from it.
        assert_eq!(k_center_greedy(&ids, &cands, &labeled, 2), vec![1, 2]);
        assert_eq!(k_center_greedy(&ids, &cands, &labeled, 1), vec![1]);
    }

    #[test]
    fn selection_runs_on_real_views() {
        let (bundle, pool) = toy_bundle(12, 160);
        let labeled = pool.labeled_view(&bundle);
        let unlabeled = pool.unlabeled_view(&bundle);
        let candidates = unlabeled.ids().to_vec();
        let robust = snapshot(&bundle, "mlp:6", 2);
        let attack = AttackConfig::default_inner();
        let req = SelectionRequest {
            strategy: Strategy::Cset,
            budget: 5,
            round: 0,
            seed: 0,
            candidates: &candidates,
            pool: &unlabeled,
            labeled: &labeled,
            robust: &robust,
            standard: None,
            attack: &attack,
        };
        let a = coreset_select(&req).unwrap().selected;
        let b = coreset_select(&req).unwrap().selected;
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    proptest! {
        /// Brute-force check of the greedy max-min rule: at every step the
        /// chosen candidate attains the maximum distance to its nearest
        /// center among the not-yet-chosen candidates.
        #[test]
        fn greedy_matches_brute_force(points in proptest::collection::vec(-50i32..50, 2..12),
                                       centers in proptest::collection::vec(-50i32..50, 1..4),
                                       budget in 1usize..6) {
            let ids: Vec<usize> = (0..points.len()).collect();
            let cands = Array2::from_shape_fn((points.len(), 1), |(i, _)| points[i] as f64);
            let labs = Array2::from_shape_fn((centers.len(), 1), |(i, _)| centers[i] as f64);
            let got = k_center_greedy(&ids, &cands, &labs, budget);

            // Independent recomputation.
            let mut chosen: Vec<usize> = Vec::new();
            let d2 = |a: f64, b: f64| (a - b) * (a - b);
            for _ in 0..budget.min(ids.len()) {
                let mut best: Option<(usize, f64)> = None;
                for (i, &p) in points.iter().enumerate() {
                    if chosen.contains(&i) { continue; }
                    let mut nearest = f64::INFINITY;
                    for &c in &centers {
                        nearest = nearest.min(d2(p as f64, c as f64));
                    }
                    for &c in &chosen {
                        nearest = nearest.min(d2(p as f64, points[c] as f64));
                    }
                    let better = match best {
                        None => true,
                        Some((bi, bd)) => nearest > bd || (nearest == bd && i < bi),
                    };
                    if better { best = Some((i, nearest)); }
                }
                chosen.push(best.unwrap().0);
            }
            chosen.sort_unstable();
            prop_assert_eq!(got, chosen);
        }
    }
}
