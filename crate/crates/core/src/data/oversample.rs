//! Random oversampling for class imbalance.

use super::{DataError, LabeledView};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Build a training index sequence in which every present class appears as
/// often as the majority class, drawing minority-class ids with replacement.
/// The final order is a seeded shuffle.
pub fn oversample_by_class(view: &LabeledView<'_>, seed: u64) -> Result<Vec<usize>, DataError> {
    if view.is_empty() {
        return Err(DataError::EmptyLabeledSet);
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &id in view.ids() {
        by_class.entry(view.label_of(id)).or_default().push(id);
    }
    let max_count = by_class.values().map(Vec::len).max().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequence = Vec::with_capacity(max_count * by_class.len());
    for ids in by_class.values() {
        sequence.extend_from_slice(ids);
        for _ in ids.len()..max_count {
            sequence.push(ids[rng.gen_range(0..ids.len())]);
        }
    }
    sequence.shuffle(&mut rng);
    Ok(sequence)
}
