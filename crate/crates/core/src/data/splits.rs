//! Stratified train/validation/test assignment.

use super::DataError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Split fractions; must be positive and sum to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), DataError> {
        let sum = self.train + self.validation + self.test;
        if self.train <= 0.0 || self.validation <= 0.0 || self.test <= 0.0 {
            return Err(DataError::Invalid(
                "split fractions must be positive".into(),
            ));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::Invalid(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Assign each id to a split, stratified by (class, group) cell, with exact
/// global split sizes `round(f * n)` (test takes the remainder).
///
/// Per cell the three quotas are apportioned by largest remainder; small
/// global surpluses left by per-cell rounding are then transferred between
/// splits, always from the cell holding the most of the over-quota split, so
/// the result is deterministic in (ids, labels, groups, seed).
pub fn stratified_splits(
    cells: &BTreeMap<(u32, u32), Vec<usize>>,
    n: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<[Vec<usize>; 3], DataError> {
    fractions.validate()?;
    let t_train = (fractions.train * n as f64).round() as usize;
    let t_val = (fractions.validation * n as f64).round() as usize;
    if t_train + t_val >= n {
        return Err(DataError::Invalid(
            "split fractions leave no test samples".into(),
        ));
    }
    let targets = [t_train, t_val, n - t_train - t_val];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per-cell quotas via largest remainder.
    let mut quotas: Vec<[usize; 3]> = Vec::with_capacity(cells.len());
    for members in cells.values() {
        let m = members.len();
        let ideal = [
            m as f64 * targets[0] as f64 / n as f64,
            m as f64 * targets[1] as f64 / n as f64,
            m as f64 * targets[2] as f64 / n as f64,
        ];
        let mut q = [
            ideal[0].floor() as usize,
            ideal[1].floor() as usize,
            ideal[2].floor() as usize,
        ];
        let mut remainders: Vec<(usize, f64)> = (0..3).map(|k| (k, ideal[k] - ideal[k].floor())).collect();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut assigned: usize = q.iter().sum();
        for &(k, _) in remainders.iter().cycle() {
            if assigned == m {
                break;
            }
            q[k] += 1;
            assigned += 1;
        }
        quotas.push(q);
    }

    // Fix global totals by moving singles between splits.
    loop {
        let sums: Vec<usize> = (0..3).map(|k| quotas.iter().map(|q| q[k]).sum()).collect();
        let over = (0..3).find(|&k| sums[k] > targets[k]);
        let under = (0..3).find(|&k| sums[k] < targets[k]);
        match (over, under) {
            (Some(o), Some(u)) => {
                let donor = quotas
                    .iter()
                    .enumerate()
                    .max_by_key(|(i, q)| (q[o], usize::MAX - i))
                    .map(|(i, _)| i)
                    .expect("cells nonempty");
                quotas[donor][o] -= 1;
                quotas[donor][u] += 1;
            }
            _ => break,
        }
    }

    let mut out: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (members, q) in cells.values().zip(quotas.iter()) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let mut cursor = 0;
        for k in 0..3 {
            out[k].extend_from_slice(&shuffled[cursor..cursor + q[k]]);
            cursor += q[k];
        }
    }
    for list in &mut out {
        list.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells_of(labels: &[u32], groups: &[u32]) -> BTreeMap<(u32, u32), Vec<usize>> {
        let mut cells: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for i in 0..labels.len() {
            cells.entry((labels[i], groups[i])).or_default().push(i);
        }
        cells
    }

    #[test]
    fn exact_global_sizes() {
        // 4 balanced cells of 250: per-cell val/test quotas round away from
        // 37.5 and must be reconciled to the 700/150/150 targets.
        let labels: Vec<u32> = (0..1000).map(|i| (i % 2) as u32).collect();
        let groups: Vec<u32> = (0..1000).map(|i| ((i / 2) % 2) as u32).collect();
        let cells = cells_of(&labels, &groups);
        let splits = stratified_splits(&cells, 1000, SplitFractions::default(), 0).unwrap();
        assert_eq!(splits[0].len(), 700);
        assert_eq!(splits[1].len(), 150);
        assert_eq!(splits[2].len(), 150);

        let mut all: Vec<usize> = splits.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_in_seed() {
        let labels: Vec<u32> = (0..97).map(|i| (i % 3) as u32).collect();
        let groups: Vec<u32> = (0..97).map(|i| ((i / 3) % 2) as u32).collect();
        let cells = cells_of(&labels, &groups);
        let a = stratified_splits(&cells, 97, SplitFractions::default(), 5).unwrap();
        let b = stratified_splits(&cells, 97, SplitFractions::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = stratified_splits(&cells, 97, SplitFractions::default(), 6).unwrap();
        assert_ne!(a, c);
    }
}
