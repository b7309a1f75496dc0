use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tvae_core::metrics::{MetricsReport, ReplicationMetrics, Summary};
use tvae_core::tvae::{EpochLog, TvaeConfig};

use crate::{CliError, ExperimentConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub replication: usize,
    pub seed: u64,
    /// Kept epoch; absent when the model was loaded rather than trained.
    pub best_epoch: Option<usize>,
    /// Training curves, including the ε and mean-IC trajectories.
    pub epochs: Vec<EpochLog>,
    pub epsilon: f64,
    pub ate_hat_within: f64,
    pub ate_hat_out: Option<f64>,
    pub metrics: Vec<ReplicationMetrics>,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmleReplication {
    pub replication: usize,
    pub seed: u64,
    pub ate: f64,
    pub se: f64,
    pub mean_ic: f64,
    pub epsilon_hat: f64,
    pub truncated: usize,
    pub true_ate: Option<f64>,
    pub eate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    /// Model config actually trained; absent for TMLE.
    pub model: Option<TvaeConfig>,
    pub replications: Vec<ReplicationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tmle: Vec<TmleReplication>,
    pub aggregate: Vec<MetricsReport>,
}

impl VariantReport {
    pub fn scope(&self, scope: tvae_core::metrics::Scope) -> Option<&MetricsReport> {
        self.aggregate.iter().find(|a| a.scope == scope)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub variants: Vec<VariantReport>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Writes `report.json` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        self.write_summary(std::fs::File::create(dir.join("summary.csv"))?)
    }

    /// One row per variant × scope.
    pub fn write_summary<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "variant",
            "scope",
            "n_replications",
            "eate_mean",
            "eate_se",
            "pehe_mean",
            "pehe_se",
            "eatt_mean",
            "eatt_se",
            "policy_risk_mean",
            "policy_risk_se",
        ])?;
        for v in &self.variants {
            for a in &v.aggregate {
                let mut row = vec![v.name.clone(), a.scope.as_str().into(), a.n_replications.to_string()];
                for s in [a.eate, a.pehe, a.eatt, a.policy_risk] {
                    match s {
                        Some(s) => row.extend([s.mean.to_string(), s.se.to_string()]),
                        None => row.extend([String::new(), String::new()]),
                    }
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable mean ± SE table.
    pub fn table(&self) -> String {
        let cell = |s: Option<Summary>| s.map_or("-".to_string(), |s| format!("{:.3} ± {:.3}", s.mean, s.se));
        let mut out = format!(
            "{:<10} {:<14} {:>16} {:>16} {:>16} {:>16}\n",
            "variant", "scope", "eATE", "√PEHE", "eATT", "R_pol"
        );
        for v in &self.variants {
            for a in &v.aggregate {
                out += &format!(
                    "{:<10} {:<14} {:>16} {:>16} {:>16} {:>16}\n",
                    v.name,
                    a.scope.as_str(),
                    cell(a.eate),
                    cell(a.pehe),
                    cell(a.eatt),
                    cell(a.policy_risk)
                );
            }
        }
        out
    }
}
