//! Observational datasets: the synthetic generators, CSV ingestion,
//! seeded splitting, and train-statistics standardization.

mod csv_io;
mod split;
mod standardize;
mod synth;

use serde::{Deserialize, Serialize};

use crate::Tensor;

pub use csv_io::{load_csv, read_csv, write_csv, CsvSchema};
pub use split::{split, split_indices, SplitIndices, SplitSpec};
pub use standardize::{standardize, Affine, StandardizeTarget, Standardizer};
pub use synth::{generate_ihdp_shaped, generate_linear, generate_tvaesynth};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Binary,
    Continuous,
}

/// Noiseless potential-outcome means `E[y | do(t), x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialOutcomes {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
}

/// Generator-side latent draws, kept for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthLatents {
    pub z_o: Vec<f64>,
    pub z_c: Vec<f64>,
    pub z_t: Vec<f64>,
    pub z_y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CausalDataset {
    /// `[n×m]` covariates.
    pub x: Tensor,
    pub kinds: Vec<ColumnKind>,
    /// Treatment indicator, each entry 0 or 1.
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub truth: Option<PotentialOutcomes>,
    /// Membership in the randomized subset (Jobs-style data).
    pub rct: Option<Vec<bool>>,
    pub latents: Option<SynthLatents>,
}

impl CausalDataset {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn m(&self) -> usize {
        self.kinds.len()
    }

    pub fn binary_columns(&self) -> Vec<usize> {
        self.columns_of(ColumnKind::Binary)
    }

    pub fn continuous_columns(&self) -> Vec<usize> {
        self.columns_of(ColumnKind::Continuous)
    }

    fn columns_of(&self, kind: ColumnKind) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, &k)| k == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-unit ground-truth effect `mu1 − mu0`, when known.
    pub fn true_ite(&self) -> Option<Vec<f64>> {
        self.truth
            .as_ref()
            .map(|po| po.mu1.iter().zip(&po.mu0).map(|(a, b)| a - b).collect())
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.n();
        if self.x.shape().len() != 2 || self.x.rows() != n || self.x.cols() != self.kinds.len() {
            return Err(DataError::Invalid(format!(
                "x has shape {:?}, expected [{n}×{}]",
                self.x.shape(),
                self.kinds.len()
            )));
        }
        if self.y.len() != n {
            return Err(DataError::Invalid(format!("y has {} entries, expected {n}", self.y.len())));
        }
        if let Some(i) = self.t.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(DataError::Invalid(format!("t[{i}] = {} is not binary", self.t[i])));
        }
        if let Some(po) = &self.truth {
            if po.mu0.len() != n || po.mu1.len() != n {
                return Err(DataError::Invalid("mu0/mu1 length mismatch".into()));
            }
        }
        if let Some(r) = &self.rct {
            if r.len() != n {
                return Err(DataError::Invalid("rct flag length mismatch".into()));
            }
        }
        for j in self.binary_columns() {
            if (0..n).any(|i| {
                let v = self.x.get(i, j);
                v != 0.0 && v != 1.0
            }) {
                return Err(DataError::Invalid(format!("binary column x{j} has non-binary values")));
            }
        }
        Ok(())
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            x: self.x.select_rows(idx),
            kinds: self.kinds.clone(),
            t: pick(&self.t),
            y: pick(&self.y),
            truth: self.truth.as_ref().map(|po| PotentialOutcomes {
                mu0: pick(&po.mu0),
                mu1: pick(&po.mu1),
            }),
            rct: self.rct.as_ref().map(|r| idx.iter().map(|&i| r[i]).collect()),
            latents: self.latents.as_ref().map(|l| SynthLatents {
                z_o: pick(&l.z_o),
                z_c: pick(&l.z_c),
                z_t: pick(&l.z_t),
                z_y: pick(&l.z_y),
            }),
        }
    }

    /// Concatenates two datasets with identical schemas.
    pub fn concat(&self, other: &Self) -> Result<Self, DataError> {
        if self.kinds != other.kinds {
            return Err(DataError::Invalid("cannot concatenate different schemas".into()));
        }
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        let mut xd = self.x.data().to_vec();
        xd.extend_from_slice(other.x.data());
        let x = Tensor::new(vec![self.n() + other.n(), self.m()], xd)
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(Self {
            x,
            kinds: self.kinds.clone(),
            t: cat(&self.t, &other.t),
            y: cat(&self.y, &other.y),
            truth: match (&self.truth, &other.truth) {
                (Some(a), Some(b)) => Some(PotentialOutcomes {
                    mu0: cat(&a.mu0, &b.mu0),
                    mu1: cat(&a.mu1, &b.mu1),
                }),
                _ => None,
            },
            rct: match (&self.rct, &other.rct) {
                (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
                _ => None,
            },
            latents: None,
        })
    }
}
