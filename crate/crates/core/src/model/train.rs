//! Standard (non-adversarial) training and the optimizer/batch machinery
//! that adversarial training reuses.

use super::net::{ArchSpec, Mlp, ParamGrads};
use super::{cross_entropy_probs, softmax_rows, ClassifierSnapshot, ModelError, TrainingMode};
use crate::data::{oversample_by_class, LabeledView};
use crate::seeds;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd
    }
}

/// Hyperparameters for one training run. The seed fixes initialization,
/// shuffling, and oversampling draws, so equal configs give equal models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_oversample")]
    pub oversample: bool,
}

fn default_epochs() -> usize {
    40
}

fn default_batch_size() -> usize {
    32
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_oversample() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            optimizer: OptimizerKind::default(),
            seed: 0,
            oversample: default_oversample(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be > 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig(
                "learning_rate must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg
    }
}

/// First-order optimizer state over the flattened parameter vector.
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, param_count: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                t: 0,
                m: vec![0.0; param_count],
                v: vec![0.0; param_count],
            },
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &ParamGrads) -> Result<(), ModelError> {
        let g = grads.flat();
        let mut params = net.params();
        match self {
            Optimizer::Sgd { lr } => {
                for (p, gi) in params.iter_mut().zip(&g) {
                    *p -= *lr * gi;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let t_f = *t as f64;
                let bc1 = 1.0 - beta1.powf(t_f);
                let bc2 = 1.0 - beta2.powf(t_f);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= *lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
        net.set_params(&params)
    }
}

/// One gradient step's inputs: the batch plus its position in the schedule,
/// so callers can derive per-batch randomness (e.g. attack seeds).
pub(crate) struct BatchContext<'a> {
    pub x: &'a Array2<f64>,
    pub y: &'a [u32],
    pub ids: &'a [usize],
    pub epoch: usize,
}

/// Shared epoch driver. The closure computes (mean loss, parameter grads)
/// for one batch against the current network; the driver shuffles, steps the
/// optimizer, and fails fast on non-finite losses.
pub(crate) fn run_epochs<F>(
    net: &mut Mlp,
    view: &LabeledView,
    cfg: &TrainConfig,
    mut batch_step: F,
) -> Result<(), ModelError>
where
    F: FnMut(&Mlp, &BatchContext) -> Result<(f64, ParamGrads), ModelError>,
{
    cfg.validate()?;
    let base_ids: Vec<usize> = if cfg.oversample {
        oversample_by_class(view, seeds::derive(cfg.seed, "train-oversample", &[]))
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?
    } else {
        view.ids().to_vec()
    };
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, net.num_params());
    for epoch in 0..cfg.epochs {
        let mut order = base_ids.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "train-shuffle", &[epoch as u64]));
        order.shuffle(&mut rng);
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = view.features_of(chunk);
            let y = view.labels_of(chunk);
            let ctx = BatchContext {
                x: &x,
                y: &y,
                ids: chunk,
                epoch,
            };
            let (loss, grads) = batch_step(net, &ctx)?;
            if !loss.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    reason: format!("batch {batch_index} loss is {loss}"),
                });
            }
            optimizer.step(net, &grads)?;
        }
    }
    Ok(())
}

/// Mean cross-entropy and its logit gradient for one batch.
pub(crate) fn ce_loss_and_dlogits(
    net: &Mlp,
    x: &Array2<f64>,
    y: &[u32],
) -> (f64, super::net::ForwardTrace, Array2<f64>) {
    let trace = net.forward(x);
    let probs = softmax_rows(trace.logits());
    let loss = cross_entropy_probs(&probs, y);
    let batch = y.len() as f64;
    let mut dlogits = probs;
    for (row, &label) in y.iter().enumerate() {
        dlogits[(row, label as usize)] -= 1.0;
    }
    dlogits /= batch;
    (loss, trace, dlogits)
}

/// Train a classifier on the labeled pool with plain cross-entropy.
///
/// Initialization, shuffling, and oversampling all derive from
/// `cfg.seed`, so repeated calls with equal inputs return identical
/// parameters. Zero epochs returns the freshly initialized network.
pub fn train_standard(
    arch: &ArchSpec,
    view: &LabeledView,
    cfg: &TrainConfig,
    round: u32,
) -> Result<ClassifierSnapshot, ModelError> {
    cfg.validate()?;
    if view.is_empty() {
        return Err(ModelError::InvalidConfig(
            "labeled pool is empty".into(),
        ));
    }
    let mut net = Mlp::init(
        arch,
        view.feature_dim(),
        view.num_classes() as usize,
        seeds::derive(cfg.seed, "train-init", &[]),
    );
    run_epochs(&mut net, view, cfg, |net, ctx| {
        let (loss, trace, dlogits) = ce_loss_and_dlogits(net, ctx.x, ctx.y);
        let (grads, _) = net.backward(&trace, &dlogits);
        Ok((loss, grads))
    })?;
    Ok(ClassifierSnapshot::new(
        net,
        TrainingMode::Standard,
        cfg.seed,
        round,
    ))
}

/// Convenience: mean cross-entropy of a snapshot on a labeled view.
pub fn mean_cross_entropy(
    snapshot: &ClassifierSnapshot,
    view: &LabeledView,
) -> Result<f64, ModelError> {
    let x = view.features();
    let probs = snapshot.predict_proba(&x)?;
    Ok(cross_entropy_probs(&probs, &view.labels()))
}
