//! Projected gradient descent attacks and adversarial (TRADES-style)
//! training.
//!
//! The attack perturbs inputs inside an l-infinity ball of radius epsilon
//! intersected with the feature clamp range. Training minimizes a trade-off
//! loss: plain cross-entropy on benign inputs plus a weighted KL term that
//! pulls the perturbed prediction back toward the benign one.

use crate::model::net::{ArchSpec, ForwardTrace, Mlp};
use crate::model::train::{run_epochs, TrainConfig};
use crate::model::{
    cross_entropy_probs, kl_divergence_raw, softmax_rows, ClassifierSnapshot, ModelError,
    TrainingMode, PROB_FLOOR,
};
use crate::data::LabeledView;
use crate::ratio::ratio_f64;
use crate::seeds;
use ndarray::{Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdversarialError {
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error("attack objective needs labels but none were provided")]
    MissingLabels,
    #[error("expected {expected} per-row seeds, got {actual}")]
    SeedCount { expected: usize, actual: usize },
    #[error("expected {expected} labels, got {actual}")]
    LabelCount { expected: usize, actual: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the perturbation starts before the first gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackInit {
    /// Start at the clean input. Fully deterministic.
    Zero,
    /// Start at a seeded uniform draw inside the epsilon ball.
    UniformInBall,
}

/// What the attacker ascends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackObjective {
    /// Maximize cross-entropy against the true label. Needs labels.
    CrossEntropy,
    /// Maximize KL(p(x) || p(x_adv)) where p(x) is frozen at the benign
    /// input. Label-free, so it is safe on unlabeled data.
    KlToBenign,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// l-infinity radius. Accepts "4/255" style strings in config files.
    #[serde(default = "default_epsilon", deserialize_with = "ratio_f64")]
    pub epsilon: f64,
    /// Per-iteration step size, same units as epsilon.
    #[serde(default = "default_step_size", deserialize_with = "ratio_f64")]
    pub step_size: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_init")]
    pub init: AttackInit,
    /// Valid feature range; perturbed inputs never leave it.
    #[serde(default = "default_clamp")]
    pub clamp: (f64, f64),
    #[serde(default = "default_objective")]
    pub objective: AttackObjective,
}

fn default_epsilon() -> f64 {
    4.0 / 255.0
}

fn default_step_size() -> f64 {
    2.0 / 255.0
}

fn default_steps() -> usize {
    5
}

fn default_init() -> AttackInit {
    AttackInit::Zero
}

fn default_clamp() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_objective() -> AttackObjective {
    AttackObjective::CrossEntropy
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            step_size: default_step_size(),
            steps: default_steps(),
            init: default_init(),
            clamp: default_clamp(),
            objective: default_objective(),
        }
    }
}

impl AttackConfig {
    /// Inner-attack defaults for adversarial training: label-free objective
    /// with a random start. The start matters: at the clean input the KL
    /// objective sits at its minimum with an exactly zero gradient, so a
    /// zero-initialized ascent would never move.
    pub fn default_inner() -> Self {
        Self {
            objective: AttackObjective::KlToBenign,
            init: AttackInit::UniformInBall,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AdversarialError> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(AdversarialError::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(AdversarialError::InvalidConfig(format!(
                "step_size must be finite and > 0, got {}",
                self.step_size
            )));
        }
        if self.steps == 0 {
            return Err(AdversarialError::InvalidConfig(
                "steps must be >= 1".to_string(),
            ));
        }
        if !(self.clamp.0.is_finite() && self.clamp.1.is_finite() && self.clamp.0 < self.clamp.1) {
            return Err(AdversarialError::InvalidConfig(format!(
                "clamp range ({}, {}) is not a valid interval",
                self.clamp.0, self.clamp.1
            )));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }
}

/// sign with sign(0) = 0, so zero-gradient coordinates stay untouched.
/// (`f64::signum` maps 0.0 to 1.0, which would bias the attack.)
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamp every coordinate into the epsilon box around the original input
/// intersected with the feature range.
fn project(adv: &mut Array2<f64>, original: &Array2<f64>, epsilon: f64, clamp: (f64, f64)) {
    for (a, &orig) in adv.iter_mut().zip(original.iter()) {
        let lo = (orig - epsilon).max(clamp.0);
        let hi = (orig + epsilon).min(clamp.1);
        *a = (*a).min(hi).max(lo);
    }
}

/// PGD against a raw network; shared by the public snapshot API and the
/// training loop, which attacks the partially trained network in place.
pub(crate) fn pgd_attack_net(
    net: &Mlp,
    x: &Array2<f64>,
    labels: Option<&[u32]>,
    cfg: &AttackConfig,
    row_seeds: &[u64],
) -> Result<Array2<f64>, AdversarialError> {
    cfg.validate()?;
    net.check_input(x)?;
    if row_seeds.len() != x.nrows() {
        return Err(AdversarialError::SeedCount {
            expected: x.nrows(),
            actual: row_seeds.len(),
        });
    }
    let labels = match cfg.objective {
        AttackObjective::CrossEntropy => {
            let y = labels.ok_or(AdversarialError::MissingLabels)?;
            if y.len() != x.nrows() {
                return Err(AdversarialError::LabelCount {
                    expected: x.nrows(),
                    actual: y.len(),
                });
            }
            Some(y)
        }
        AttackObjective::KlToBenign => None,
    };

    // The benign distribution is frozen before any perturbation.
    let benign = match cfg.objective {
        AttackObjective::KlToBenign => Some(softmax_rows(&net.logits(x))),
        AttackObjective::CrossEntropy => None,
    };

    let mut adv = x.clone();
    if cfg.init == AttackInit::UniformInBall && cfg.epsilon > 0.0 {
        for (row_idx, mut row) in adv.axis_iter_mut(Axis(0)).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(row_seeds[row_idx]);
            for v in row.iter_mut() {
                *v += rng.gen_range(-cfg.epsilon..cfg.epsilon);
            }
        }
    }
    project(&mut adv, x, cfg.epsilon, cfg.clamp);

    for _ in 0..cfg.steps {
        let trace = net.forward(&adv);
        let probs = softmax_rows(trace.logits());
        let dlogits = match cfg.objective {
            AttackObjective::CrossEntropy => {
                // d/dlogits of per-row CE is (p - onehot); ascent direction.
                let mut d = probs;
                for (row, &label) in labels.expect("checked above").iter().enumerate() {
                    d[(row, label as usize)] -= 1.0;
                }
                d
            }
            AttackObjective::KlToBenign => {
                // d/dlogits(x_adv) of KL(benign || p(x_adv)) is (p_adv - benign).
                &probs - benign.as_ref().expect("frozen above")
            }
        };
        let (_, dinput) = net.backward(&trace, &dlogits);
        for (a, g) in adv.iter_mut().zip(dinput.iter()) {
            *a += cfg.step_size * sign(*g);
        }
        project(&mut adv, x, cfg.epsilon, cfg.clamp);
    }
    Ok(adv)
}

/// Run a PGD attack against a trained snapshot.
///
/// `row_seeds` supplies one seed per input row (used by the uniform init,
/// ignored by zero init); equal inputs and seeds give identical outputs.
/// With `epsilon = 0` the result equals the clean input exactly.
pub fn pgd_attack(
    model: &ClassifierSnapshot,
    x: &Array2<f64>,
    labels: Option<&[u32]>,
    cfg: &AttackConfig,
    row_seeds: &[u64],
) -> Result<Array2<f64>, AdversarialError> {
    pgd_attack_net(model.network(), x, labels, cfg, row_seeds)
}

/// Adversarial training hyperparameters: the usual training knobs plus the
/// trade-off weight and the inner attack used to craft perturbations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustTrainConfig {
    #[serde(default = "default_adv_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: crate::model::train::OptimizerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_oversample")]
    pub oversample: bool,
    /// Weight on the KL robustness term. Zero degenerates to plain
    /// cross-entropy training.
    #[serde(default = "default_beta")]
    pub trades_beta: f64,
    #[serde(default = "AttackConfig::default_inner")]
    pub attack: AttackConfig,
    /// Fine-tune from the previous round's model instead of reinitializing.
    #[serde(default = "default_warm_start")]
    pub warm_start: bool,
}

fn default_adv_epochs() -> usize {
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

fn default_beta() -> f64 {
    6.0
}

fn default_warm_start() -> bool {
    true
}

impl Default for RobustTrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_adv_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            optimizer: Default::default(),
            seed: 0,
            oversample: default_oversample(),
            trades_beta: default_beta(),
            attack: AttackConfig::default_inner(),
            warm_start: default_warm_start(),
        }
    }
}

impl RobustTrainConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            oversample: self.oversample,
        }
    }

    pub fn validate(&self) -> Result<(), AdversarialError> {
        self.train_config().validate()?;
        self.attack.validate()?;
        if !(self.trades_beta.is_finite() && self.trades_beta >= 0.0) {
            return Err(AdversarialError::InvalidConfig(format!(
                "trades_beta must be finite and >= 0, got {}",
                self.trades_beta
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg
    }
}

/// Loss pieces for one batch with a fixed perturbed batch `x_adv`:
/// mean CE(p(x), y) + beta * mean KL(p(x) || p(x_adv)), and the logit
/// gradients for both forward passes. The perturbation itself is treated as
/// a constant; gradients flow through both prediction heads.
fn trades_terms(
    net: &Mlp,
    x: &Array2<f64>,
    x_adv: &Array2<f64>,
    y: &[u32],
    beta: f64,
) -> (f64, ForwardTrace, Array2<f64>, ForwardTrace, Array2<f64>) {
    let trace_ben = net.forward(x);
    let p = softmax_rows(trace_ben.logits());
    let trace_adv = net.forward(x_adv);
    let q = softmax_rows(trace_adv.logits());
    let batch = y.len() as f64;

    let ce = cross_entropy_probs(&p, y);
    let mut kl_mean = 0.0;
    let mut kl_rows = Vec::with_capacity(y.len());
    for (p_row, q_row) in p.rows().into_iter().zip(q.rows()) {
        let kl = kl_divergence_raw(
            p_row.as_slice().expect("contiguous row"),
            q_row.as_slice().expect("contiguous row"),
        );
        kl_rows.push(kl);
        kl_mean += kl;
    }
    kl_mean /= batch;
    let loss = ce + beta * kl_mean;

    // Benign head: CE gradient plus the KL gradient through p.
    let mut d_ben = Array2::zeros(p.dim());
    for row in 0..y.len() {
        let kl = kl_rows[row];
        for col in 0..p.ncols() {
            let pj = p[(row, col)];
            let qj = q[(row, col)];
            let ce_part = pj - if y[row] as usize == col { 1.0 } else { 0.0 };
            let log_ratio = (pj.max(PROB_FLOOR)).ln() - (qj.max(PROB_FLOOR)).ln();
            let kl_part = pj * (log_ratio - kl);
            d_ben[(row, col)] = (ce_part + beta * kl_part) / batch;
        }
    }
    // Adversarial head: KL gradient through q only.
    let d_adv = (&q - &p) * (beta / batch);

    (loss, trace_ben, d_ben, trace_adv, d_adv)
}

/// The trade-off loss with the perturbation generated by the configured
/// inner attack against the given model. Returns the scalar batch loss.
pub fn trades_loss(
    model: &ClassifierSnapshot,
    x: &Array2<f64>,
    y: &[u32],
    cfg: &RobustTrainConfig,
    row_seeds: &[u64],
) -> Result<f64, AdversarialError> {
    cfg.validate()?;
    if y.len() != x.nrows() {
        return Err(AdversarialError::LabelCount {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let labels = match cfg.attack.objective {
        AttackObjective::CrossEntropy => Some(y),
        AttackObjective::KlToBenign => None,
    };
    let x_adv = pgd_attack_net(model.network(), x, labels, &cfg.attack, row_seeds)?;
    let (loss, ..) = trades_terms(model.network(), x, &x_adv, y, cfg.trades_beta);
    if !loss.is_finite() {
        return Err(AdversarialError::Model(ModelError::NonFinite {
            context: "trade-off loss".to_string(),
        }));
    }
    Ok(loss)
}

/// Loss and flat parameter gradient of the trade-off objective for a fixed
/// perturbed batch, exactly as one training step sees it. The perturbation
/// is a constant; gradients flow through both forward passes.
pub fn trades_loss_and_grad(
    net: &Mlp,
    x: &Array2<f64>,
    x_adv: &Array2<f64>,
    y: &[u32],
    beta: f64,
) -> Result<(f64, Vec<f64>), AdversarialError> {
    net.check_input(x)?;
    net.check_input(x_adv)?;
    if x.nrows() != x_adv.nrows() {
        return Err(AdversarialError::Model(ModelError::LengthMismatch {
            left: x.nrows(),
            right: x_adv.nrows(),
        }));
    }
    if y.len() != x.nrows() {
        return Err(AdversarialError::LabelCount {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let (loss, trace_ben, d_ben, trace_adv, d_adv) = trades_terms(net, x, x_adv, y, beta);
    let (mut grads, _) = net.backward(&trace_ben, &d_ben);
    let (adv_grads, _) = net.backward(&trace_adv, &d_adv);
    grads.add(&adv_grads);
    Ok((loss, grads.flat()))
}

/// Starting point for adversarial training.
pub enum AdvInit<'a> {
    /// Fresh seeded initialization of the given architecture.
    Scratch(&'a ArchSpec),
    /// Continue from an existing model (warm start).
    Warm(&'a ClassifierSnapshot),
}

/// Adversarially train a classifier on the labeled pool.
///
/// Each minibatch is perturbed by the inner attack against the current
/// parameters, then both the benign and perturbed batches contribute to the
/// gradient. Fully deterministic given config and seed.
pub fn train_adversarial(
    init: AdvInit,
    view: &LabeledView,
    cfg: &RobustTrainConfig,
    round: u32,
) -> Result<ClassifierSnapshot, AdversarialError> {
    cfg.validate()?;
    if view.is_empty() {
        return Err(AdversarialError::Model(ModelError::InvalidConfig(
            "labeled pool is empty".into(),
        )));
    }
    let mut net = match init {
        AdvInit::Scratch(arch) => Mlp::init(
            arch,
            view.feature_dim(),
            view.num_classes() as usize,
            seeds::derive(cfg.seed, "adv-init", &[]),
        ),
        AdvInit::Warm(snapshot) => {
            let net = snapshot.network();
            if net.input_dim() != view.feature_dim()
                || net.num_classes() != view.num_classes() as usize
            {
                return Err(AdversarialError::Model(ModelError::ShapeMismatch {
                    expected: format!(
                        "{} features / {} classes",
                        view.feature_dim(),
                        view.num_classes()
                    ),
                    actual: format!("{} features / {} classes", net.input_dim(), net.num_classes()),
                }));
            }
            net.clone()
        }
    };

    let train_cfg = cfg.train_config();
    let beta = cfg.trades_beta;
    let attack = &cfg.attack;
    let master = cfg.seed;
    let mut failure: Option<AdversarialError> = None;
    let result = run_epochs(&mut net, view, &train_cfg, |net, ctx| {
        let row_seeds: Vec<u64> = ctx
            .ids
            .iter()
            .map(|&id| seeds::derive(master, "inner-attack", &[ctx.epoch as u64, id as u64]))
            .collect();
        let labels = match attack.objective {
            AttackObjective::CrossEntropy => Some(ctx.y),
            AttackObjective::KlToBenign => None,
        };
        let x_adv = match pgd_attack_net(net, ctx.x, labels, attack, &row_seeds) {
            Ok(adv) => adv,
            Err(e) => {
                failure = Some(e);
                return Err(ModelError::NonFinite {
                    context: "inner attack".to_string(),
                });
            }
        };
        let (loss, trace_ben, d_ben, trace_adv, d_adv) =
            trades_terms(net, ctx.x, &x_adv, ctx.y, beta);
        let (mut grads, _) = net.backward(&trace_ben, &d_ben);
        let (adv_grads, _) = net.backward(&trace_adv, &d_adv);
        grads.add(&adv_grads);
        Ok((loss, grads))
    });
    match result {
        Ok(()) => {}
        Err(e) => return Err(failure.unwrap_or(AdversarialError::Model(e))),
    }
    Ok(ClassifierSnapshot::new(
        net,
        TrainingMode::Robust,
        cfg.seed,
        round,
    ))
}
