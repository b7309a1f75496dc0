//! Experiment driver for the TVAE workspace: synthetic data generation,
//! training with checkpointing, evaluation, the ablation grid and TMLE
//! baselines, all configured by one JSON file.

pub mod config;
pub mod report;
pub mod run;

pub use config::{AblationConfig, DatasetConfig, ExperimentConfig, SplitFractions, Variant};
pub use report::{ReplicationReport, RunReport, TmleReplication, VariantReport};
pub use run::{cmd_ablate, cmd_evaluate, cmd_generate, cmd_tmle, cmd_train, GenerateSummary, RunOptions};

use tvae_core::datasets::DataError;
use tvae_core::metrics::MetricError;
use tvae_core::tmle::TmleError;
use tvae_core::tvae::TvaeError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Tvae(#[from] TvaeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tmle(#[from] TmleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Tvae(TvaeError::Config(_)) => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::Tvae(TvaeError::NumericalAbort { .. }) => EXIT_NUMERICAL,
            _ => 1,
        }
    }
}
