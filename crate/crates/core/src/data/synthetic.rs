//! Seeded synthetic dataset generators.

use super::splits::{stratified_splits, SplitFractions};
use super::{DataError, DatasetBundle, Example, Splits, DEFAULT_CLAMP};
use crate::seeds;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Parameters of the `two-group-gaussians` generator.
///
/// Two classes, two sensitive groups, three features. Feature 2 encodes group
/// membership (noisy 0.15 / 0.85). Group 0 is a linearly separable pair of
/// blobs in features 0-1. Group 1 reuses the same region with an XOR layout
/// whose class assignment disagrees with group 0, so a classifier must
/// condition on the group feature and needs markedly more group-1 labels to
/// resolve it: class difficulty depends on the group.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TwoGroupGaussiansParams {
    /// Share of samples in the hard group (group 1).
    pub hard_group_fraction: f64,
    /// Blob standard deviation for the easy group.
    pub easy_noise: f64,
    /// Blob standard deviation for the hard group.
    pub hard_noise: f64,
    /// Noise on the group-indicator feature.
    pub group_feature_noise: f64,
}

impl Default for TwoGroupGaussiansParams {
    fn default() -> Self {
        Self {
            hard_group_fraction: 0.3,
            easy_noise: 0.10,
            hard_noise: 0.10,
            group_feature_noise: 0.03,
        }
    }
}

/// A named generator plus its sampling seed, sample count, and splits.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub name: String,
    pub seed: u64,
    pub n: usize,
    #[serde(default)]
    pub params: TwoGroupGaussiansParams,
    #[serde(default)]
    pub splits: SplitFractions,
}

/// Generate a bundle from a named synthetic generator. Same spec, same bytes.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetBundle, DataError> {
    match spec.name.as_str() {
        "two-group-gaussians" => two_group_gaussians(spec),
        other => Err(DataError::UnknownGenerator(other.to_string())),
    }
}

fn two_group_gaussians(spec: &SyntheticSpec) -> Result<DatasetBundle, DataError> {
    let p = spec.params;
    if !(p.hard_group_fraction > 0.0 && p.hard_group_fraction < 1.0) {
        return Err(DataError::Invalid(format!(
            "hard_group_fraction {} out of range (0, 1)",
            p.hard_group_fraction
        )));
    }
    if spec.n < 40 {
        return Err(DataError::Invalid(format!(
            "two-group-gaussians needs n >= 40, got {}",
            spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(spec.seed, seeds::tag::DATASET, &[]));
    let easy = Normal::new(0.0, p.easy_noise).map_err(|e| DataError::Invalid(e.to_string()))?;
    let hard = Normal::new(0.0, p.hard_noise).map_err(|e| DataError::Invalid(e.to_string()))?;
    let flag = Normal::new(0.0, p.group_feature_noise)
        .map_err(|e| DataError::Invalid(e.to_string()))?;

    // Class centers in features 0-1.
    const EASY_CENTERS: [[f64; 2]; 2] = [[0.30, 0.30], [0.70, 0.70]];
    const HARD_CENTERS: [[[f64; 2]; 2]; 2] = [
        [[0.30, 0.30], [0.70, 0.70]], // class 0: the diagonal group 0 uses for both classes
        [[0.30, 0.70], [0.70, 0.30]], // class 1: the anti-diagonal
    ];

    let (lo, hi) = DEFAULT_CLAMP;
    let clamp = |v: f64| v.clamp(lo, hi);
    let mut examples = Vec::with_capacity(spec.n);
    for id in 0..spec.n {
        let group: u32 = if rng.gen::<f64>() < p.hard_group_fraction {
            1
        } else {
            0
        };
        let label: u32 = rng.gen_range(0..2);
        let (cx, cy, noise) = if group == 0 {
            let c = EASY_CENTERS[label as usize];
            (c[0], c[1], easy)
        } else {
            let c = HARD_CENTERS[label as usize][rng.gen_range(0..2usize)];
            (c[0], c[1], hard)
        };
        let indicator = if group == 0 { 0.15 } else { 0.85 };
        let features = vec![
            clamp(cx + noise.sample(&mut rng)),
            clamp(cy + noise.sample(&mut rng)),
            clamp(indicator + flag.sample(&mut rng)),
        ];
        examples.push(Example {
            id,
            features,
            label: Some(label),
            group,
        });
    }

    let mut cells: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for ex in &examples {
        cells
            .entry((ex.label.unwrap(), ex.group))
            .or_default()
            .push(ex.id);
    }
    let [train, validation, test] = stratified_splits(
        &cells,
        spec.n,
        spec.splits,
        seeds::derive(spec.seed, seeds::tag::SPLIT, &[]),
    )?;
    DatasetBundle::new(
        examples,
        2,
        2,
        DEFAULT_CLAMP,
        Splits {
            train,
            validation,
            test,
        },
    )
}
