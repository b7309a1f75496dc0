use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use tvae_core::datasets::{split, write_csv, CausalDataset};
use tvae_core::metrics::{aggregate, eate, eatt, pehe, policy_risk, EffectTruth, ReplicationMetrics, Scope};
use tvae_core::tmle;
use tvae_core::tvae::{self, estimate_effects, load_checkpoint, save_checkpoint, TSource, TrainReport, TvaeConfig, TvaeModel};

use crate::report::{ReplicationReport, RunReport, TmleReplication, VariantReport};
use crate::{CliError, ExperimentConfig};

/// Mean efficient influence curve tolerated after the TMLE update.
pub const MEAN_IC_TOL: f64 = 1e-6;
/// Policy threshold on `τ̂` for policy risk.
pub const POLICY_ALPHA: f64 = 0.0;

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Worker threads for replications; results are ordered by index.
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1 }
    }
}

fn par_map<T, R, F>(opts: &RunOptions, items: Vec<T>, f: F) -> Result<Vec<R>, CliError>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R, CliError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub path: PathBuf,
    pub n: usize,
    pub m: usize,
    pub treated_fraction: f64,
    pub mean_y: f64,
    /// Mean true unit effect when potential outcomes are known.
    pub ate: Option<f64>,
}

/// Writes the dataset of replication 0 to `<out>/dataset.csv`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateSummary, CliError> {
    let ds = cfg.dataset.resolve(cfg.replication_seed(0), 0)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("dataset.csv");
    write_csv(&ds, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    let n = ds.n() as f64;
    Ok(GenerateSummary {
        path,
        n: ds.n(),
        m: ds.m(),
        treated_fraction: ds.t.iter().sum::<f64>() / n,
        mean_y: ds.y.iter().sum::<f64>() / n,
        ate: ds.true_ite().map(|v| v.iter().sum::<f64>() / n),
    })
}

struct Splits {
    train: CausalDataset,
    val: CausalDataset,
    test: CausalDataset,
}

fn replication_splits(cfg: &ExperimentConfig, r: usize) -> Result<Splits, CliError> {
    let seed = cfg.replication_seed(r);
    let ds = cfg.dataset.resolve(seed, r)?;
    let (train, val, test) = split(&ds, &cfg.dataset.split().with_seed(seed))?;
    Ok(Splits { train, val, test })
}

/// Metrics of `model` on `data`; those without ground truth are absent.
pub fn scope_metrics(model: &TvaeModel, data: &CausalDataset, scope: Scope, seed: u64) -> Result<(ReplicationMetrics, f64), CliError> {
    let est = estimate_effects(model, data, TSource::Observed, seed)?;
    let truth = data.true_ite();
    let (mut e, mut p) = (None, None);
    if let Some(truth) = &truth {
        e = Some(eate(&est.tau_hat, EffectTruth::PerUnit(truth))?);
        p = Some(pehe(&est.tau_hat, EffectTruth::PerUnit(truth))?);
    }
    let (mut att, mut risk) = (None, None);
    if let Some(rct) = &data.rct {
        att = eatt(&data.y, &data.t, rct, &est.q1, &est.q0)
            .map_err(|err| log::warn!("eATT not computable on {}: {err}", scope.as_str()))
            .ok();
        risk = policy_risk(&data.y, &data.t, rct, &est.tau_hat, POLICY_ALPHA)
            .map_err(|err| log::warn!("policy risk not computable on {}: {err}", scope.as_str()))
            .ok()
            .flatten();
    }
    Ok((
        ReplicationMetrics {
            scope,
            eate: e,
            pehe: p,
            eatt: att,
            policy_risk: risk,
        },
        est.ate_hat,
    ))
}

fn assess(model: &TvaeModel, s: &Splits, r: usize, seed: u64, training: Option<TrainReport>, t0: Instant) -> Result<ReplicationReport, CliError> {
    let within = s.train.concat(&s.val)?;
    let (m_in, ate_in) = scope_metrics(model, &within, Scope::WithinSample, seed)?;
    let mut metrics = vec![m_in];
    let mut ate_out = None;
    if s.test.n() > 0 {
        let (m_out, a) = scope_metrics(model, &s.test, Scope::OutOfSample, seed)?;
        metrics.push(m_out);
        ate_out = Some(a);
    }
    let (best_epoch, epochs) = match training {
        Some(t) => (Some(t.best_epoch), t.epochs),
        None => (None, Vec::new()),
    };
    Ok(ReplicationReport {
        replication: r,
        seed,
        best_epoch,
        epochs,
        epsilon: model.epsilon(),
        ate_hat_within: ate_in,
        ate_hat_out: ate_out,
        metrics,
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Trains and evaluates replication `r` of `model_cfg`. Data, split and
/// model initialization all use the replication seed.
pub fn run_replication(cfg: &ExperimentConfig, model_cfg: &TvaeConfig, r: usize) -> Result<(TvaeModel, ReplicationReport), CliError> {
    let t0 = Instant::now();
    let seed = cfg.replication_seed(r);
    let s = replication_splits(cfg, r)?;
    let mc = TvaeConfig {
        seed,
        ..model_cfg.clone()
    };
    let (model, training) = tvae::train(&mc, &s.train, &s.val)?;
    let rep = assess(&model, &s, r, seed, Some(training), t0)?;
    log::info!(
        "replication {r} (seed {seed}) done in {:.1}s, best epoch {:?}",
        rep.wall_clock_seconds,
        rep.best_epoch
    );
    Ok((model, rep))
}

fn variant_report(name: &str, model: Option<TvaeConfig>, replications: Vec<ReplicationReport>) -> Result<VariantReport, CliError> {
    let mut agg = Vec::new();
    for scope in [Scope::WithinSample, Scope::OutOfSample] {
        let m: Vec<ReplicationMetrics> = replications
            .iter()
            .flat_map(|r| r.metrics.iter().copied())
            .filter(|m| m.scope == scope)
            .collect();
        if !m.is_empty() {
            agg.push(aggregate(&m)?);
        }
    }
    Ok(VariantReport {
        name: name.to_string(),
        model,
        replications,
        tmle: Vec::new(),
        aggregate: agg,
    })
}

pub fn checkpoint_path(out: &Path, r: usize) -> PathBuf {
    out.join("checkpoints").join(format!("rep{r}.json"))
}

/// Trains the configured model for every replication, writes one checkpoint
/// per replication plus `report.json` and `summary.csv`.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let t0 = Instant::now();
    std::fs::create_dir_all(cfg.output_dir.join("checkpoints"))?;
    let reps = par_map(opts, (0..cfg.replications).collect(), |r| {
        let (model, rep) = run_replication(cfg, &cfg.model, r)?;
        save_checkpoint(&model, checkpoint_path(&cfg.output_dir, r))?;
        Ok(rep)
    })?;
    let report = RunReport {
        command: "train".into(),
        config: cfg.clone(),
        variants: vec![variant_report("model", Some(cfg.model.clone()), reps)?],
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    report.write(&cfg.output_dir)?;
    Ok(report)
}

/// Re-evaluates checkpoints written by `train`; reports go to
/// `<out>/evaluate/`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let t0 = Instant::now();
    let reps = par_map(opts, (0..cfg.replications).collect(), |r| {
        let start = Instant::now();
        let path = checkpoint_path(&cfg.output_dir, r);
        if !path.exists() {
            return Err(CliError::Config(format!("missing checkpoint {}", path.display())));
        }
        let model = load_checkpoint(&path)?;
        let s = replication_splits(cfg, r)?;
        assess(&model, &s, r, cfg.replication_seed(r), None, start)
    })?;
    let report = RunReport {
        command: "evaluate".into(),
        config: cfg.clone(),
        variants: vec![variant_report("model", Some(cfg.model.clone()), reps)?],
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    report.write(&cfg.output_dir.join("evaluate"))?;
    Ok(report)
}

/// Every variant × replication with matched seeds; variants keep the
/// requested order.
pub fn cmd_ablate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let t0 = Instant::now();
    let ablation = cfg
        .ablation
        .as_ref()
        .ok_or_else(|| CliError::Config("`ablate` needs an `ablation` block".into()))?;
    let variants = cfg.variants_of(ablation)?;
    let configs: Vec<TvaeConfig> = variants.iter().map(|v| v.apply(&cfg.model)).collect();
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..cfg.replications).map(move |r| (v, r)))
        .collect();
    let mut results = par_map(opts, jobs, |(v, r)| {
        let (_, rep) = run_replication(cfg, &configs[v], r)?;
        Ok(rep)
    })?
    .into_iter();
    let mut out = Vec::new();
    for (v, c) in variants.iter().zip(configs) {
        let reps: Vec<_> = results.by_ref().take(cfg.replications).collect();
        out.push(variant_report(&ablation.variants[out.len()], Some(c), reps)?);
        log::info!("variant {} finished", v.name());
    }
    let report = RunReport {
        command: "ablate".into(),
        config: cfg.clone(),
        variants: out,
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    report.write(&cfg.output_dir)?;
    Ok(report)
}

/// TMLE baseline on the full dataset of each replication.
pub fn cmd_tmle(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let t0 = Instant::now();
    let pairs = par_map(opts, (0..cfg.replications).collect(), |r| {
        let start = Instant::now();
        let seed = cfg.replication_seed(r);
        let ds = cfg.dataset.resolve(seed, r)?;
        let est = tmle::run(&ds, &cfg.tmle)?;
        let mean_ic = est.mean_ic();
        if !(mean_ic.abs() <= MEAN_IC_TOL) {
            return Err(CliError::Numerical(format!(
                "replication {r}: mean efficient IC {mean_ic:e} exceeds {MEAN_IC_TOL:e}"
            )));
        }
        let tau: Vec<f64> = est.q1_star.iter().zip(&est.q0_star).map(|(a, b)| a - b).collect();
        let truth = ds.true_ite();
        let n = ds.n() as f64;
        let mut m = ReplicationMetrics {
            scope: Scope::WithinSample,
            eate: None,
            pehe: None,
            eatt: None,
            policy_risk: None,
        };
        if let Some(t) = &truth {
            m.eate = Some((est.ate - t.iter().sum::<f64>() / n).abs());
            m.pehe = Some(pehe(&tau, EffectTruth::PerUnit(t))?);
        }
        if let Some(rct) = &ds.rct {
            m.eatt = eatt(&ds.y, &ds.t, rct, &est.q1_star, &est.q0_star).ok();
            m.policy_risk = policy_risk(&ds.y, &ds.t, rct, &tau, POLICY_ALPHA).ok().flatten();
        }
        let detail = TmleReplication {
            replication: r,
            seed,
            ate: est.ate,
            se: est.se,
            mean_ic,
            epsilon_hat: est.epsilon_hat,
            truncated: est.truncated,
            true_ate: truth.as_ref().map(|t| t.iter().sum::<f64>() / n),
            eate: m.eate,
        };
        let rep = ReplicationReport {
            replication: r,
            seed,
            best_epoch: None,
            epochs: Vec::new(),
            epsilon: est.epsilon_hat,
            ate_hat_within: est.ate,
            ate_hat_out: None,
            metrics: vec![m],
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        Ok((rep, detail))
    })?;
    let (reps, details): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let mut variant = variant_report("tmle", None, reps)?;
    variant.tmle = details;
    let report = RunReport {
        command: "tmle".into(),
        config: cfg.clone(),
        variants: vec![variant],
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    report.write(&cfg.output_dir)?;
    Ok(report)
}
