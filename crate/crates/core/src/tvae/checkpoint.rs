//! JSON checkpoints: `{"format": "tvae-checkpoint", "version": 1, "config",
//! "kinds", "transforms", "trained", "params": [{"name", "tensor"}]}`.
//! Parameter tensors are stored as `{"shape": [...], "data": [...]}` in the
//! order the model creates them.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Transforms;
use super::{TvaeConfig, TvaeError, TvaeModel};
use crate::datasets::ColumnKind;
use crate::Tensor;

pub const CHECKPOINT_FORMAT: &str = "tvae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TvaeConfig,
    pub kinds: Vec<ColumnKind>,
    pub transforms: Transforms,
    pub trained: bool,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &TvaeModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            kinds: model.kinds().to_vec(),
            transforms: model.transforms.clone(),
            trained: model.trained,
            params: model
                .params
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    tensor: t.clone(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<TvaeModel, TvaeError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(TvaeError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = TvaeModel::new(self.config, self.kinds, &mut rng)?;
        model
            .params
            .load(self.params.into_iter().map(|p| (p.name, p.tensor)).collect())
            .map_err(|e| TvaeError::Checkpoint(e.to_string()))?;
        model.transforms = self.transforms;
        model.trained = self.trained;
        Ok(model)
    }
}

pub fn save_checkpoint(model: &TvaeModel, path: impl AsRef<Path>) -> Result<(), TvaeError> {
    let json = serde_json::to_string(&Checkpoint::from_model(model))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TvaeModel, TvaeError> {
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model()
}
