//! Experiment orchestration: configuration, budget resolution, the active
//! learning round loop, and wall-clock timing.

pub mod config;
pub mod run;
pub mod timing;

pub use config::{
    apply_override, from_document, parse_document, resolve_budget, BudgetSpec, DatasetConfig,
    ExperimentConfig,
};
pub use run::{
    run_fral, InitContext, InitReport, NoopObserver, RoundContext, RoundReport, RoundSeeds,
    RoundTiming, RunObserver, RunResult,
};
pub use timing::time_section;

use crate::adversarial::AdversarialError;
use crate::data::DataError;
use crate::fairness::FairnessError;
use crate::model::ModelError;
use crate::selection::SelectionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("override `{path}`: {message}")]
    Override { path: String, message: String },
    #[error("round {round}: {source}")]
    Round {
        round: u32,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error("persistence: {0}")]
    Persist(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Adversarial(#[from] AdversarialError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Attach the failing round index, per the abort contract of the loop.
    pub(crate) fn at_round(self, round: u32) -> Self {
        ExperimentError::Round {
            round,
            source: Box::new(self),
        }
    }
}
