use serde::{Deserialize, Serialize};

use super::{CausalDataset, ColumnKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeTarget {
    Outcome,
    ContinuousCovariates,
}

/// `v ↦ (v − mean) / std`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub mean: f64,
    pub std: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { mean: 0.0, std: 1.0 };

    /// Fits on `values` with the population standard deviation. Returns
    /// `None` for constant (or empty) input.
    pub fn fit(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        (std > 0.0 && std.is_finite()).then_some(Self { mean, std })
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    /// Maps a difference on the standardized scale back to original units.
    pub fn inverse_delta(&self, d: f64) -> f64 {
        d * self.std
    }
}

/// Transform record fitted on a training split and applied elsewhere.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub outcome: Option<Affine>,
    pub covariates: Vec<(usize, Affine)>,
}

impl Standardizer {
    pub fn fit(train: &CausalDataset, which: &[StandardizeTarget]) -> Self {
        let mut s = Self::default();
        if which.contains(&StandardizeTarget::Outcome) {
            s.outcome = Affine::fit(&train.y);
            if s.outcome.is_none() {
                log::warn!("outcome has zero variance; left unstandardized");
            }
        }
        if which.contains(&StandardizeTarget::ContinuousCovariates) {
            for (j, kind) in train.kinds.iter().enumerate() {
                if *kind != ColumnKind::Continuous {
                    continue;
                }
                let col: Vec<f64> = (0..train.n()).map(|i| train.x.get(i, j)).collect();
                match Affine::fit(&col) {
                    Some(a) => s.covariates.push((j, a)),
                    None => log::warn!("covariate x{j} has zero variance; left unstandardized"),
                }
            }
        }
        s
    }

    pub fn apply(&self, data: &CausalDataset) -> CausalDataset {
        self.map(data, Affine::forward)
    }

    pub fn invert(&self, data: &CausalDataset) -> CausalDataset {
        self.map(data, Affine::inverse)
    }

    fn map(&self, data: &CausalDataset, f: fn(&Affine, f64) -> f64) -> CausalDataset {
        let mut out = data.clone();
        if let Some(a) = &self.outcome {
            out.y.iter_mut().for_each(|v| *v = f(a, *v));
            if let Some(po) = &mut out.truth {
                po.mu0.iter_mut().for_each(|v| *v = f(a, *v));
                po.mu1.iter_mut().for_each(|v| *v = f(a, *v));
            }
        }
        let m = out.m();
        let xd = out.x.data_mut();
        for &(j, ref a) in &self.covariates {
            for row in xd.chunks_mut(m) {
                row[j] = f(a, row[j]);
            }
        }
        out
    }
}

/// Fits on `data` and returns the transformed copy with its record.
pub fn standardize(data: &CausalDataset, which: &[StandardizeTarget]) -> (CausalDataset, Standardizer) {
    let s = Standardizer::fit(data, which);
    (s.apply(data), s)
}
