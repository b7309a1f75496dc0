//! Targeted variational autoencoder for treatment-effect estimation.

mod checkpoint;
mod config;
mod effects;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::TvaeConfig;
pub use effects::{estimate_effects, estimate_effects_with, EffectEstimates, TSource};
pub use model::{Batch, Factor, Noise, Objective, Posteriors, Transforms, TvaeModel};
pub use train::{evaluate_objective, fit, gradient_spot_check, init_model, mean_ic, train, EpochLog, TrainReport};

pub use crate::tmle::OutcomeKind;

use crate::datasets::DataError;
use crate::diffcore::DiffError;
use crate::tmle::TmleError;

#[derive(Debug, thiserror::Error)]
pub enum TvaeError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("numerical abort at epoch {epoch} in {term}")]
    NumericalAbort { epoch: usize, term: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tmle(#[from] TmleError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
