use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tvae_core::datasets::{generate_linear, generate_tvaesynth, load_csv, CausalDataset, CsvSchema, SplitSpec};
use tvae_core::tmle::TmleOptions;
use tvae_core::tvae::TvaeConfig;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: TvaeConfig,
    #[serde(default)]
    pub ablation: Option<AblationConfig>,
    #[serde(default)]
    pub tmle: TmleOptions,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.3,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn with_seed(&self, seed: u64) -> SplitSpec {
        SplitSpec::new(self.train, self.val, self.test, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// A fresh TVAESynth draw per replication.
    Tvaesynth {
        n: usize,
        #[serde(default)]
        split: SplitFractions,
    },
    /// The one-covariate linear model with ATE 1.
    Linear {
        n: usize,
        #[serde(default)]
        split: SplitFractions,
    },
    /// One file shared by all replications, or a directory whose `*.csv`
    /// files (sorted by name) are used one per replication.
    Csv {
        path: PathBuf,
        #[serde(default)]
        binary: Option<Vec<usize>>,
        #[serde(default)]
        split: SplitFractions,
    },
}

impl DatasetConfig {
    pub fn split(&self) -> &SplitFractions {
        match self {
            DatasetConfig::Tvaesynth { split, .. } | DatasetConfig::Linear { split, .. } | DatasetConfig::Csv { split, .. } => split,
        }
    }

    /// Dataset for replication seed `seed` (index `rep`).
    pub fn resolve(&self, seed: u64, rep: usize) -> Result<CausalDataset, CliError> {
        match self {
            DatasetConfig::Tvaesynth { n, .. } => Ok(generate_tvaesynth(*n, seed)),
            DatasetConfig::Linear { n, .. } => Ok(generate_linear(*n, seed)),
            DatasetConfig::Csv { path, binary, .. } => {
                let schema = CsvSchema { binary: binary.clone() };
                let file = if path.is_dir() {
                    let files = csv_files(path)?;
                    files[rep % files.len()].clone()
                } else {
                    path.clone()
                };
                Ok(load_csv(&file, &schema)?)
            }
        }
    }
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("no .csv files in {}", dir.display())));
    }
    Ok(files)
}

/// Ablation rows, derived from the full-model config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "+z_o*")]
    ZoStar,
    #[serde(rename = "+z_o")]
    Zo,
    #[serde(rename = "+xi")]
    Xi,
    #[serde(rename = "+z_o+xi*")]
    ZoXiStar,
    #[serde(rename = "+z_o+xi")]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Base,
        Variant::ZoStar,
        Variant::Zo,
        Variant::Xi,
        Variant::ZoXiStar,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::ZoStar => "+z_o*",
            Variant::Zo => "+z_o",
            Variant::Xi => "+xi",
            Variant::ZoXiStar => "+z_o+xi*",
            Variant::Full => "+z_o+xi",
        }
    }

    /// Accepts the ASCII names and their `ξ` spellings.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let norm = s.trim().replace('ξ', "xi");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm || (norm == "full" && *v == Variant::Full))
            .ok_or_else(|| CliError::Config(format!("unknown ablation variant `{s}`")))
    }

    /// Model config of this row given the full model. `base` and `+xi` fold
    /// the `z_o` dimensions into `z_c` so total latent size is unchanged;
    /// `+z_o*` adds `z_o` on top of the enlarged `z_c`.
    pub fn apply(self, full: &TvaeConfig) -> TvaeConfig {
        let folded = full.d_zc + full.d_zo;
        let mut c = full.clone();
        match self {
            Variant::Base => {
                c.d_zc = folded;
                c.d_zo = 0;
                c.lambda_tl = 0.0;
            }
            Variant::ZoStar => {
                c.d_zc = folded;
                c.lambda_tl = 0.0;
            }
            Variant::Zo => c.lambda_tl = 0.0,
            Variant::Xi => {
                c.d_zc = folded;
                c.d_zo = 0;
            }
            Variant::ZoXiStar => c.stop_propensity_gradient = false,
            Variant::Full => {}
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub variants: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.dataset
            .split()
            .with_seed(0)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(a) = &self.ablation {
            self.variants_of(a)?;
        }
        Ok(())
    }

    pub fn variants_of(&self, a: &AblationConfig) -> Result<Vec<Variant>, CliError> {
        let v = a.variants.iter().map(|s| Variant::parse(s)).collect::<Result<Vec<_>, _>>()?;
        if v.len() < 2 {
            return Err(CliError::Config("ablation needs at least two variants".into()));
        }
        if self.model.d_zo == 0 {
            return Err(CliError::Config("ablation needs a full model with d_zo ≥ 1".into()));
        }
        Ok(v)
    }

    /// Replication `r` uses seed `seed + r` for data, split and model.
    pub fn replication_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}
