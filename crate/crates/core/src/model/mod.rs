//! Classifier snapshots, probability outputs, and the KL primitives that the
//! scoring and training code share.

pub mod io;
pub mod net;
pub mod train;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use net::{Activation, ArchSpec, ForwardTrace, Mlp, ParamGrads};
pub use train::{mean_cross_entropy, train_standard, Optimizer, OptimizerKind, TrainConfig};

/// Floor applied to probabilities before any logarithm. Both divergence
/// arguments are clamped to `[PROB_FLOOR, 1]` and renormalized, which bounds
/// every KL value and keeps zero entries from producing infinities.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("distributions have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("unknown architecture {0:?}")]
    UnknownArchitecture(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("snapshot i/o: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A probability distribution over classes: finite, nonnegative entries that
/// sum to one within `1e-6`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::InvalidProbability("empty vector".to_string()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::InvalidProbability(format!(
                    "entry {i} is not finite"
                )));
            }
            if v < 0.0 {
                return Err(ModelError::InvalidProbability(format!(
                    "entry {i} is negative ({v})"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(ModelError::InvalidProbability(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// KL divergence `KL(p || q)` in nats.
///
/// Both arguments are clamped elementwise to `[PROB_FLOOR, 1]` and
/// renormalized before the sum, so zero entries are safe and the result is
/// always finite and nonnegative. Identical inputs give exactly zero.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64, ModelError> {
    if p.len() != q.len() {
        return Err(ModelError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(kl_divergence_raw(p.values(), q.values()))
}

/// KL on raw slices that are already softmax outputs; shared by the batched
/// scoring paths that never materialize `ProbabilityVector`s.
pub(crate) fn kl_divergence_raw(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let clamp_sum = |v: &[f64]| -> f64 { v.iter().map(|x| x.clamp(PROB_FLOOR, 1.0)).sum() };
    let ps = clamp_sum(p);
    let qs = clamp_sum(q);
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let pc = pi.clamp(PROB_FLOOR, 1.0) / ps;
        let qc = qi.clamp(PROB_FLOOR, 1.0) / qs;
        total += pc * (pc / qc).ln();
    }
    total.max(0.0)
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy of probability rows against integer labels, in nats.
pub fn cross_entropy_probs(probs: &Array2<f64>, labels: &[u32]) -> f64 {
    assert_eq!(probs.nrows(), labels.len(), "one label per row");
    let mut total = 0.0;
    for (row, &label) in probs.rows().into_iter().zip(labels) {
        total -= row[label as usize].max(PROB_FLOOR).ln();
    }
    total / labels.len() as f64
}

/// Whether a snapshot came out of plain or adversarial training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    Standard,
    Robust,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::Standard => "standard",
            TrainingMode::Robust => "robust",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "standard" => Ok(TrainingMode::Standard),
            "robust" => Ok(TrainingMode::Robust),
            other => Err(ModelError::Snapshot(format!(
                "unknown training mode {other:?}"
            ))),
        }
    }
}

/// An immutable trained classifier. Prediction never mutates the network,
/// so a snapshot can be shared freely between scoring and evaluation.
#[derive(Debug, Clone)]
pub struct ClassifierSnapshot {
    net: Mlp,
    mode: TrainingMode,
    seed: u64,
    round: u32,
}

impl ClassifierSnapshot {
    pub fn new(net: Mlp, mode: TrainingMode, seed: u64, round: u32) -> Self {
        Self {
            net,
            mode,
            seed,
            round,
        }
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn mode(&self) -> TrainingMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn arch_id(&self) -> &str {
        self.net.arch().id()
    }

    /// Softmax outputs for a feature batch, one row per example.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        self.net.check_input(x)?;
        Ok(softmax_rows(&self.net.logits(x)))
    }

    /// Per-row probability vectors; convenient for the KL-based scorers.
    pub fn predict_rows(&self, x: &Array2<f64>) -> Result<Vec<ProbabilityVector>, ModelError> {
        let probs = self.predict_proba(x)?;
        probs
            .axis_iter(Axis(0))
            .map(|row| ProbabilityVector::new(row.to_vec()))
            .collect()
    }

    /// Argmax labels; ties resolve to the lowest class index.
    pub fn predict_labels(&self, x: &Array2<f64>) -> Result<Vec<u32>, ModelError> {
        let probs = self.predict_proba(x)?;
        Ok(probs
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0usize;
                for (i, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = i;
                    }
                }
                best as u32
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn probability_vector_validates() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![1.0]).is_ok());
        assert!(ProbabilityVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        // Tiny drift below the tolerance is accepted.
        assert!(ProbabilityVector::new(vec![0.3, 0.7 + 5e-7]).is_ok());
    }

    #[test]
    fn kl_worked_examples() {
        let one_hot = ProbabilityVector::new(vec![1.0, 0.0]).unwrap();
        let uniform = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        // A point mass against uniform over two classes is ln 2 up to the
        // probability floor.
        assert_relative_eq!(
            kl_divergence(&one_hot, &uniform).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-6
        );

        let p = ProbabilityVector::new(vec![0.9, 0.1]).unwrap();
        let expected = 0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln();
        assert_relative_eq!(kl_divergence(&p, &uniform).unwrap(), expected, epsilon = 1e-9);
        assert_relative_eq!(kl_divergence(&p, &uniform).unwrap(), 0.3680, epsilon = 1e-4);
    }

    #[test]
    fn kl_is_zero_for_identical_inputs() {
        let p = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let hot = ProbabilityVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(kl_divergence(&hot, &hot).unwrap(), 0.0);
    }

    #[test]
    fn kl_handles_zero_entries() {
        let hot = ProbabilityVector::new(vec![1.0, 0.0]).unwrap();
        let other = ProbabilityVector::new(vec![0.0, 1.0]).unwrap();
        let v = kl_divergence(&hot, &other).unwrap();
        assert!(v.is_finite());
        assert!(v > 0.0);
        // Bounded by the floor: at most ln(1 / PROB_FLOOR).
        assert!(v <= (1.0 / PROB_FLOOR).ln() + 1e-9);
    }

    #[test]
    fn kl_is_asymmetric() {
        let p = ProbabilityVector::new(vec![0.9, 0.1]).unwrap();
        let q = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let pq = kl_divergence(&p, &q).unwrap();
        let qp = kl_divergence(&q, &p).unwrap();
        assert!((pq - qp).abs() > 1e-3);
    }

    #[test]
    fn kl_rejects_length_mismatch() {
        let p = ProbabilityVector::new(vec![1.0]).unwrap();
        let q = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            kl_divergence(&p, &q),
            Err(ModelError::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let logits = array![[1.0, 2.0, 3.0], [1000.0, 1000.0, -1000.0]];
        let probs = softmax_rows(&logits);
        for row in probs.rows() {
            assert_relative_eq!(row.sum(), 1.0, epsilon = 1e-12);
            assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
        // Extreme logits stay stable.
        assert_relative_eq!(probs[(1, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_matches_hand_value() {
        let probs = array![[0.25, 0.75], [0.5, 0.5]];
        let got = cross_entropy_probs(&probs, &[1, 0]);
        let expected = (-(0.75f64.ln()) - 0.5f64.ln()) / 2.0;
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn snapshot_prediction_is_pure() {
        let arch = ArchSpec::parse("mlp:4").unwrap();
        let net = Mlp::init(&arch, 3, 2, 5);
        let snap = ClassifierSnapshot::new(net, TrainingMode::Standard, 5, 0);
        let x = array![[0.1, 0.2, 0.3], [0.9, 0.8, 0.7]];
        let first = snap.predict_proba(&x).unwrap();
        let second = snap.predict_proba(&x).unwrap();
        assert_eq!(first, second);
        assert_eq!(snap.predict_labels(&x).unwrap().len(), 2);
    }

    #[test]
    fn snapshot_rejects_wrong_width() {
        let arch = ArchSpec::parse("linear").unwrap();
        let net = Mlp::init(&arch, 3, 2, 5);
        let snap = ClassifierSnapshot::new(net, TrainingMode::Standard, 5, 0);
        let x = array![[0.1, 0.2]];
        assert!(matches!(
            snap.predict_proba(&x),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        let p = ProbabilityVector::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(p.argmax(), 0);
    }

    proptest! {
        /// Nonnegativity and finiteness over random distribution pairs.
        #[test]
        fn kl_nonnegative_finite(raw_p in proptest::collection::vec(0.0f64..1.0, 2..6),
                                 raw_q in proptest::collection::vec(0.0f64..1.0, 2..6)) {
            let n = raw_p.len().min(raw_q.len());
            let norm = |v: &[f64]| -> Option<Vec<f64>> {
                let s: f64 = v.iter().sum();
                if s <= 0.0 { return None; }
                Some(v.iter().map(|x| x / s).collect())
            };
            if let (Some(p), Some(q)) = (norm(&raw_p[..n]), norm(&raw_q[..n])) {
                let p = ProbabilityVector::new(p).unwrap();
                let q = ProbabilityVector::new(q).unwrap();
                let v = kl_divergence(&p, &q).unwrap();
                prop_assert!(v.is_finite());
                prop_assert!(v >= 0.0);
            }
        }
    }
}
