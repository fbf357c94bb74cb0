//! Dataset representation and pool bookkeeping.
//!
//! A [`DatasetBundle`] owns every example (features, ground-truth label,
//! sensitive group) together with disjoint train/validation/test splits.
//! Active learning state lives in [`PoolState`], which partitions the train
//! split into labeled and unlabeled ids. Acquisition strategies only ever see
//! an [`UnlabeledView`], which exposes features and group membership but not
//! labels; ground truth is released exclusively through
//! [`PoolState::acquire`], simulating a manual annotation oracle.

mod ingest;
mod oversample;
mod splits;
mod synthetic;

pub use ingest::{load_image_manifest, load_tabular, TabularOptions};
pub use oversample::oversample_by_class;
pub use splits::SplitFractions;
pub use synthetic::{generate_synthetic, SyntheticSpec, TwoGroupGaussiansParams};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Default per-feature clamp range; matches pixel-style `epsilon = 4/255`
/// conventions.
pub const DEFAULT_CLAMP: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Error)]
pub enum DataError {
    #[error("ingestion error at row {row}: {reason}")]
    Ingestion { row: usize, reason: String },
    #[error("ingestion error: {0}")]
    Source(String),
    #[error("validation error: split {split} has no samples of class {class}")]
    MissingClass { split: &'static str, class: u32 },
    #[error("validation error: split {split} has no samples of group {group}")]
    MissingGroup { split: &'static str, group: u32 },
    #[error("validation error: {0}")]
    Invalid(String),
    #[error("labeled fraction {0} out of range (0, 1)")]
    FractionOutOfRange(f64),
    #[error("unknown group id {0}")]
    UnknownGroup(u32),
    #[error("acquisition rejected: id {0} is not in the unlabeled pool")]
    NotUnlabeled(usize),
    #[error("empty labeled set")]
    EmptyLabeledSet,
    #[error("unknown synthetic generator {0:?}")]
    UnknownGenerator(String),
}

/// One sample: feature vector, optional ground-truth class, sensitive group.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: usize,
    pub features: Vec<f64>,
    pub label: Option<u32>,
    pub group: u32,
}

/// Index sets for the three fixed splits.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &[usize]); 3] {
        [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ]
    }
}

/// Which split to address in evaluation calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// A full dataset with splits, class count, and group count.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    examples: Vec<Example>,
    num_classes: u32,
    num_groups: u32,
    clamp: (f64, f64),
    splits: Splits,
}

impl DatasetBundle {
    /// Build a bundle and check its invariants: ids are dense, features are
    /// finite and in the clamp range, labels/groups are in range, splits are
    /// disjoint and jointly cover labeled ground truth, and every class and
    /// group appears in every split.
    pub fn new(
        examples: Vec<Example>,
        num_classes: u32,
        num_groups: u32,
        clamp: (f64, f64),
        splits: Splits,
    ) -> Result<Self, DataError> {
        if num_classes < 2 {
            return Err(DataError::Invalid(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if clamp.0 >= clamp.1 {
            return Err(DataError::Invalid(format!(
                "clamp range [{}, {}] is empty",
                clamp.0, clamp.1
            )));
        }
        let dim = examples
            .first()
            .map(|e| e.features.len())
            .ok_or_else(|| DataError::Invalid("empty dataset".into()))?;
        for (i, ex) in examples.iter().enumerate() {
            if ex.id != i {
                return Err(DataError::Invalid(format!(
                    "example at position {i} has id {}",
                    ex.id
                )));
            }
            if ex.features.len() != dim {
                return Err(DataError::Invalid(format!(
                    "example {i} has {} features, expected {dim}",
                    ex.features.len()
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(DataError::Invalid(format!(
                    "example {i} has non-finite features"
                )));
            }
            if let Some(label) = ex.label {
                if label >= num_classes {
                    return Err(DataError::Invalid(format!(
                        "example {i} has label {label} >= {num_classes}"
                    )));
                }
            }
            if ex.group >= num_groups {
                return Err(DataError::Invalid(format!(
                    "example {i} has group {} >= {num_groups}",
                    ex.group
                )));
            }
        }

        let mut seen = BTreeSet::new();
        for (name, ids) in splits.named() {
            for &id in ids {
                if id >= examples.len() {
                    return Err(DataError::Invalid(format!(
                        "split {name} references unknown id {id}"
                    )));
                }
                if !seen.insert(id) {
                    return Err(DataError::Invalid(format!(
                        "id {id} appears in more than one split"
                    )));
                }
                if examples[id].label.is_none() {
                    return Err(DataError::Invalid(format!(
                        "split {name} contains unlabeled ground truth at id {id}"
                    )));
                }
            }
        }

        // Every class and group must be represented in every split.
        for (name, ids) in splits.named() {
            let mut classes = BTreeSet::new();
            let mut groups = BTreeSet::new();
            for &id in ids {
                classes.insert(examples[id].label.expect("checked above"));
                groups.insert(examples[id].group);
            }
            for class in 0..num_classes {
                if !classes.contains(&class) {
                    return Err(DataError::MissingClass { split: name, class });
                }
            }
            for group in 0..num_groups {
                if !groups.contains(&group) {
                    return Err(DataError::MissingGroup { split: name, group });
                }
            }
        }

        Ok(Self {
            examples,
            num_classes,
            num_groups,
            clamp,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn num_groups(&self) -> u32 {
        self.num_groups
    }

    pub fn clamp(&self) -> (f64, f64) {
        self.clamp
    }

    pub fn feature_dim(&self) -> usize {
        self.examples[0].features.len()
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn split_ids(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.splits.train,
            Split::Validation => &self.splits.validation,
            Split::Test => &self.splits.test,
        }
    }

    pub fn example(&self, id: usize) -> &Example {
        &self.examples[id]
    }

    pub fn group_of(&self, id: usize) -> u32 {
        self.examples[id].group
    }

    /// Ground-truth label. Callers outside the annotation oracle and the
    /// evaluators must go through pool views instead.
    pub fn label_of(&self, id: usize) -> Option<u32> {
        self.examples[id].label
    }

    /// Feature rows for `ids`, in the given order.
    pub fn features_matrix(&self, ids: &[usize]) -> Array2<f64> {
        let dim = self.feature_dim();
        let mut out = Array2::zeros((ids.len(), dim));
        for (row, &id) in ids.iter().enumerate() {
            for (col, &v) in self.examples[id].features.iter().enumerate() {
                out[(row, col)] = v;
            }
        }
        out
    }

    /// Test helper for label-blindness checks: a copy of the bundle where the
    /// stored labels of `ids` are overwritten. Splits must not reference the
    /// rewritten ids.
    pub fn with_labels_overwritten(&self, ids: &[usize], label: u32) -> Self {
        let mut clone = self.clone();
        for &id in ids {
            clone.examples[id].label = Some(label);
        }
        clone
    }
}

/// Record of one acquisition batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcquisitionRecord {
    pub round: u32,
    pub ids: Vec<usize>,
}

/// Labeled/unlabeled partition of the train split.
#[derive(Debug, Clone)]
pub struct PoolState {
    labeled: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
    log: Vec<AcquisitionRecord>,
}

impl PoolState {
    /// Seeded initial pool of size `round(labeled_fraction * |train|)`,
    /// stratified so every (class, group) cell with at least one train sample
    /// contributes at least one labeled sample when the target size allows.
    pub fn init(
        bundle: &DatasetBundle,
        labeled_fraction: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        if !(labeled_fraction > 0.0 && labeled_fraction < 1.0) {
            return Err(DataError::FractionOutOfRange(labeled_fraction));
        }
        let train = &bundle.splits.train;
        let target = (labeled_fraction * train.len() as f64).round() as usize;
        let target = target.clamp(1, train.len().saturating_sub(1));

        let mut cells: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for &id in train {
            let ex = bundle.example(id);
            cells
                .entry((ex.label.expect("train split is labeled"), ex.group))
                .or_default()
                .push(id);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cell_lists: Vec<Vec<usize>> = cells.into_values().collect();
        for list in &mut cell_lists {
            list.shuffle(&mut rng);
        }
        cell_lists.shuffle(&mut rng);

        let mut labeled = BTreeSet::new();
        // One sample per cell while capacity allows, then uniform fill.
        for list in &cell_lists {
            if labeled.len() >= target {
                break;
            }
            labeled.insert(list[0]);
        }
        if labeled.len() < target {
            let mut rest: Vec<usize> = train
                .iter()
                .copied()
                .filter(|id| !labeled.contains(id))
                .collect();
            rest.sort_unstable();
            rest.shuffle(&mut rng);
            for id in rest {
                if labeled.len() >= target {
                    break;
                }
                labeled.insert(id);
            }
        }

        let unlabeled: BTreeSet<usize> = train
            .iter()
            .copied()
            .filter(|id| !labeled.contains(id))
            .collect();
        Ok(Self {
            labeled,
            unlabeled,
            log: Vec::new(),
        })
    }

    pub fn labeled_ids(&self) -> Vec<usize> {
        self.labeled.iter().copied().collect()
    }

    pub fn unlabeled_ids(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled.len()
    }

    pub fn num_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn is_labeled(&self, id: usize) -> bool {
        self.labeled.contains(&id)
    }

    pub fn acquisition_log(&self) -> &[AcquisitionRecord] {
        &self.log
    }

    /// Unlabeled ids whose group equals `z`, ascending. An empty result is
    /// not an error; an out-of-range group id is.
    pub fn group_subset(&self, bundle: &DatasetBundle, z: u32) -> Result<Vec<usize>, DataError> {
        if z >= bundle.num_groups() {
            return Err(DataError::UnknownGroup(z));
        }
        Ok(self
            .unlabeled
            .iter()
            .copied()
            .filter(|&id| bundle.group_of(id) == z)
            .collect())
    }

    /// Move `ids` from the unlabeled to the labeled pool, releasing their
    /// ground truth. Atomic: if any id is not currently unlabeled the whole
    /// batch is rejected and the pool is unchanged.
    pub fn acquire(&mut self, ids: &[usize], round: u32) -> Result<(), DataError> {
        let mut batch = BTreeSet::new();
        for &id in ids {
            if !self.unlabeled.contains(&id) {
                return Err(DataError::NotUnlabeled(id));
            }
            if !batch.insert(id) {
                return Err(DataError::NotUnlabeled(id));
            }
        }
        for &id in &batch {
            self.unlabeled.remove(&id);
            self.labeled.insert(id);
        }
        self.log.push(AcquisitionRecord {
            round,
            ids: batch.into_iter().collect(),
        });
        Ok(())
    }

    /// Partition invariant over the train split; asserted by the loop after
    /// every acquisition.
    pub fn check_partition(&self, bundle: &DatasetBundle) -> Result<(), DataError> {
        if !self.labeled.is_disjoint(&self.unlabeled) {
            return Err(DataError::Invalid(
                "labeled and unlabeled pools overlap".into(),
            ));
        }
        let train: BTreeSet<usize> = bundle.splits.train.iter().copied().collect();
        let union: BTreeSet<usize> = self.labeled.union(&self.unlabeled).copied().collect();
        if union != train {
            return Err(DataError::Invalid(
                "labeled and unlabeled pools do not cover the train split".into(),
            ));
        }
        Ok(())
    }

    pub fn labeled_view<'a>(&self, bundle: &'a DatasetBundle) -> LabeledView<'a> {
        LabeledView {
            bundle,
            ids: self.labeled_ids(),
        }
    }

    pub fn unlabeled_view<'a>(&self, bundle: &'a DatasetBundle) -> UnlabeledView<'a> {
        UnlabeledView {
            bundle,
            ids: self.unlabeled_ids(),
        }
    }
}

/// Read access to labeled samples: features, label, and group.
#[derive(Clone)]
pub struct LabeledView<'a> {
    bundle: &'a DatasetBundle,
    ids: Vec<usize>,
}

impl<'a> LabeledView<'a> {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_classes(&self) -> u32 {
        self.bundle.num_classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.bundle.feature_dim()
    }

    pub fn clamp(&self) -> (f64, f64) {
        self.bundle.clamp()
    }

    pub fn features(&self) -> Array2<f64> {
        self.bundle.features_matrix(&self.ids)
    }

    pub fn features_of(&self, ids: &[usize]) -> Array2<f64> {
        self.bundle.features_matrix(ids)
    }

    pub fn label_of(&self, id: usize) -> u32 {
        self.bundle.example(id).label.expect("labeled view")
    }

    pub fn group_of(&self, id: usize) -> u32 {
        self.bundle.group_of(id)
    }

    pub fn labels(&self) -> Vec<u32> {
        self.ids.iter().map(|&id| self.label_of(id)).collect()
    }

    pub fn labels_of(&self, ids: &[usize]) -> Vec<u32> {
        ids.iter()
            .map(|&id| self.bundle.example(id).label.expect("labeled view"))
            .collect()
    }

    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for &id in &self.ids {
            *counts.entry(self.label_of(id)).or_insert(0) += 1;
        }
        counts
    }
}

/// Read access to unlabeled samples. Exposes features and group only; the
/// stored ground truth stays behind the acquisition oracle.
#[derive(Clone)]
pub struct UnlabeledView<'a> {
    bundle: &'a DatasetBundle,
    ids: Vec<usize>,
}

impl<'a> UnlabeledView<'a> {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.bundle.feature_dim()
    }

    pub fn features_of(&self, ids: &[usize]) -> Array2<f64> {
        self.bundle.features_matrix(ids)
    }

    pub fn group_of(&self, id: usize) -> u32 {
        self.bundle.group_of(id)
    }
}
