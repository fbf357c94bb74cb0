//! Fair robust active learning framework.
//!
//! The crate implements a pool-based active learning loop that targets the
//! worst-performing sensitive group of a classifier trained with TRADES-style
//! adversarial training. Each round the loop evaluates per-group standard and
//! robust performance, picks the worst group on the validation split, scores
//! that group's unlabeled samples by joint prediction inconsistency (JIN), and
//! acquires the top-budget samples for labeling before adversarial retraining.
//! Conventional acquisition baselines (random, entropy, k-center coreset,
//! BADGE, worst-group random) sit behind the same strategy interface so runs
//! are directly comparable.
//!
//! Module map:
//! - [`data`]: dataset bundles, labeled/unlabeled pool bookkeeping, ingestion,
//!   synthetic generators, class oversampling.
//! - [`model`]: small differentiable classifiers (linear / MLP), standard
//!   training, probability utilities, snapshot persistence.
//! - [`adversarial`]: PGD attacks and TRADES adversarial training.
//! - [`fairness`]: group-wise evaluation, minimax/disparity aggregates,
//!   worst-group identification.
//! - [`selection`]: the JIN scorer and baseline acquisition strategies.
//! - [`experiment`]: the round loop, budget resolution, timing.
//! - [`results`]: experiment directories, metrics/report/plot outputs, config
//!   file schema.

pub mod adversarial;
pub mod data;
pub mod experiment;
pub mod fairness;
pub mod model;
mod ratio;
pub mod results;
pub mod seeds;
pub mod selection;
