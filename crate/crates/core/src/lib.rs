//! Treatment-effect estimation with a targeted variational autoencoder and a
//! classical TMLE baseline.

pub mod datasets;
pub mod diffcore;
pub mod distributions;
pub mod metrics;
pub mod tmle;
pub mod tvae;

pub use diffcore::Scalar;

pub type Tensor = diffcore::Tensor<f64>;
pub type Tensor32 = diffcore::Tensor<f32>;
pub type Tape = diffcore::Tape<f64>;
pub type Tape32 = diffcore::Tape<f32>;
pub type ParamSet = diffcore::ParamSet<f64>;
pub type AdamState = diffcore::AdamState<f64>;
