use serde::{Deserialize, Serialize};

use super::TvaeError;
use crate::tmle::OutcomeKind;

/// Hyperparameters of a TVAE. Defaults are the TVAESynth settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvaeConfig {
    pub d_zt: usize,
    pub d_zy: usize,
    pub d_zc: usize,
    /// Zero disables the miscellaneous factors.
    pub d_zo: usize,
    pub hidden_neurons: usize,
    pub hidden_layers: usize,
    pub lambda_tl: f64,
    pub beta: f64,
    pub lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub outcome_kind: OutcomeKind,
    pub n_effect_samples: usize,
    /// Detach the propensity inside the targeted regularizer.
    pub stop_propensity_gradient: bool,
    pub seed: u64,
}

impl Default for TvaeConfig {
    fn default() -> Self {
        Self {
            d_zt: 2,
            d_zy: 2,
            d_zc: 2,
            d_zo: 1,
            hidden_neurons: 20,
            hidden_layers: 2,
            lambda_tl: 0.1,
            beta: 1.0,
            lr: 5e-5,
            lr_decay: 5e-3,
            weight_decay: 1e-4,
            batch_size: 200,
            epochs: 40,
            outcome_kind: OutcomeKind::UnboundedContinuous,
            n_effect_samples: 100,
            stop_propensity_gradient: true,
            seed: 0,
        }
    }
}

impl TvaeConfig {
    /// IHDP settings: 3 hidden layers of 300, dims 10/10/15/5, λ 0.4.
    pub fn ihdp() -> Self {
        Self {
            d_zt: 10,
            d_zy: 10,
            d_zc: 15,
            d_zo: 5,
            hidden_neurons: 300,
            hidden_layers: 3,
            lambda_tl: 0.4,
            lr: 5e-5,
            lr_decay: 5e-4,
            epochs: 200,
            ..Self::default()
        }
    }

    /// Jobs settings: 3 hidden layers of 200, dims 6/6/8/4, binary outcome.
    pub fn jobs() -> Self {
        Self {
            d_zt: 6,
            d_zy: 6,
            d_zc: 8,
            d_zo: 4,
            hidden_neurons: 200,
            hidden_layers: 3,
            lambda_tl: 0.1,
            lr: 1e-5,
            lr_decay: 5e-4,
            epochs: 200,
            outcome_kind: OutcomeKind::Binary,
            ..Self::default()
        }
    }

    pub fn total_latent(&self) -> usize {
        self.d_zt + self.d_zy + self.d_zc + self.d_zo
    }

    pub fn validate(&self) -> Result<(), TvaeError> {
        let bad = |m: String| Err(TvaeError::Config(m));
        if self.d_zt == 0 || self.d_zy == 0 || self.d_zc == 0 {
            return bad("d_zt, d_zy and d_zc must be at least 1".into());
        }
        if self.hidden_neurons == 0 {
            return bad("hidden_neurons must be at least 1".into());
        }
        if !(self.lambda_tl >= 0.0) || !self.lambda_tl.is_finite() {
            return bad(format!("lambda_tl = {} must be a finite value ≥ 0", self.lambda_tl));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta = {} must be a finite value ≥ 0", self.beta));
        }
        if !(self.lr > 0.0) || !(self.lr_decay >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr must be positive; lr_decay and weight_decay non-negative".into());
        }
        if self.batch_size == 0 || self.epochs == 0 || self.n_effect_samples == 0 {
            return bad("batch_size, epochs and n_effect_samples must be at least 1".into());
        }
        Ok(())
    }
}
