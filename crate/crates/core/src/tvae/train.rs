use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Batch, Noise, Transforms};
use super::{TvaeConfig, TvaeError, TvaeModel};
use crate::datasets::CausalDataset;
use crate::diffcore::gradcheck::{grads_agree, GradCheck, FD_ABS_TOL, FD_REL_TOL, FD_STEP};
use crate::diffcore::{AdamConfig, DiffError, Tape};
use crate::tmle::{clamp_propensity, efficient_ic};
use crate::AdamState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean efficient influence curve on the validation split at the
    /// untargeted heads.
    pub val_mean_ic: f64,
    pub epsilon: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (minimum validation loss).
    pub best_epoch: usize,
}

/// Random streams derived from the config seed.
const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const VAL_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Builds an untrained model for the schema of `train` with transforms
/// fitted on it.
pub fn init_model(config: &TvaeConfig, train: &CausalDataset) -> Result<TvaeModel, TvaeError> {
    let mut rng = stream(config.seed, INIT_STREAM);
    let mut model = TvaeModel::new(config.clone(), train.kinds.clone(), &mut rng)?;
    model.set_transforms(Transforms::fit(train, config.outcome_kind)?);
    Ok(model)
}

/// Minimizes `mean(−ELBO) + λ·mean(ξ)` with Adam and keeps the epoch
/// snapshot with the lowest validation objective.
pub fn train(config: &TvaeConfig, train: &CausalDataset, val: &CausalDataset) -> Result<(TvaeModel, TrainReport), TvaeError> {
    let mut model = init_model(config, train)?;
    let report = fit(&mut model, train, val)?;
    Ok((model, report))
}

/// Trains `model` in place from its current parameters.
pub fn fit(model: &mut TvaeModel, train: &CausalDataset, val: &CausalDataset) -> Result<TrainReport, TvaeError> {
    let cfg = model.config.clone();
    let tr = model.prepare(train)?;
    let va = model.prepare(val)?;
    if tr.is_empty() || va.is_empty() {
        return Err(TvaeError::Input("training and validation splits must be non-empty".into()));
    }
    let mut rng = stream(cfg.seed, TRAIN_STREAM);
    let val_noise = Noise::sample(&cfg, va.len(), &mut stream(cfg.seed, VAL_STREAM));
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            lr_decay: cfg.lr_decay,
            ..AdamConfig::default()
        },
        &model.params,
    );

    let mut order: Vec<usize> = (0..tr.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, crate::ParamSet)> = None;
    for epoch in 0..cfg.epochs {
        adam.set_epoch(epoch);
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = tr.select(chunk);
            let noise = Noise::sample(&cfg, batch.len(), &mut rng);
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let obj = model.objective(&mut tape, &bound, &batch, &noise)?;
            let loss = tape.value(obj.total).item()?;
            if !loss.is_finite() {
                let term = obj
                    .terms(&tape)
                    .into_iter()
                    .find(|(_, v)| !v.is_finite())
                    .map_or("total", |(name, _)| name);
                return Err(TvaeError::NumericalAbort {
                    epoch,
                    term: term.to_string(),
                });
            }
            tape.backward(obj.total)?;
            let grads = model.params.gradients(&tape, &bound);
            adam.step(&mut model.params, &grads).map_err(|e| match e {
                DiffError::Optimizer { param } => TvaeError::NumericalAbort {
                    epoch,
                    term: format!("gradient of {param}"),
                },
                other => other.into(),
            })?;
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let train_loss = sum / count as f64;
        let val_loss = evaluate_objective(model, &va, &val_noise)?;
        if !val_loss.is_finite() {
            return Err(TvaeError::NumericalAbort {
                epoch,
                term: "validation objective".into(),
            });
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_mean_ic: mean_ic(model, &va)?,
            epsilon: model.epsilon(),
            lr: adam.current_lr(),
        };
        log::debug!(
            "epoch {epoch}: train {train_loss:.5} val {val_loss:.5} ic {:.3e} eps {:.4}",
            entry.val_mean_ic,
            entry.epsilon
        );
        log.push(entry);
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    model.trained = true;
    Ok(TrainReport { epochs: log, best_epoch })
}

/// Total objective on a prepared split with fixed noise, without gradients.
pub fn evaluate_objective(model: &TvaeModel, data: &Batch, noise: &Noise) -> Result<f64, TvaeError> {
    let mut tape = Tape::new();
    let bound = model.params.bind_frozen(&mut tape);
    let obj = model.objective(&mut tape, &bound, data, noise)?;
    Ok(tape.value(obj.total).item()?)
}

/// `mean(IC)` at posterior-mean latents with the model's own `Q̂_q` and `ĝ_p`.
pub fn mean_ic(model: &TvaeModel, data: &Batch) -> Result<f64, TvaeError> {
    let post = model.posterior_params(&data.x)?;
    let z = post.map(|(mu, _)| mu);
    let (mut g, q1, q0) = model.heads(&z)?;
    clamp_propensity(&mut g);
    let n = data.len() as f64;
    let ate = q1.iter().zip(&q0).map(|(a, b)| a - b).sum::<f64>() / n;
    let ic = efficient_ic(&data.t, &data.y, &q0, &q1, &g, ate);
    Ok(ic.iter().sum::<f64>() / n)
}

/// Finite-difference check of the full training objective at `k` randomly
/// chosen parameter elements, with fixed noise. With
/// `stop_propensity_gradient` on, parameters upstream of `ĝ_p` legitimately
/// disagree by the blocked `ξ` path.
pub fn gradient_spot_check(model: &TvaeModel, batch: &Batch, noise: &Noise, k: usize, seed: u64) -> Result<Vec<GradCheck>, TvaeError> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let obj = model.objective(&mut tape, &bound, batch, noise)?;
    tape.backward(obj.total)?;
    let grads = model.params.gradients(&tape, &bound);
    let ids: Vec<_> = model.params.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let id = ids[rng.random_range(0..ids.len())];
        let j = rng.random_range(0..model.params.get(id).len());
        let x0 = model.params.get(id).data()[j];
        probe.params.get_mut(id).data_mut()[j] = x0 + FD_STEP;
        let up = evaluate_objective(&probe, batch, noise)?;
        probe.params.get_mut(id).data_mut()[j] = x0 - FD_STEP;
        let down = evaluate_objective(&probe, batch, noise)?;
        probe.params.get_mut(id).data_mut()[j] = x0;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grads[id.index()].data()[j];
        out.push(GradCheck {
            name: format!("{}[{j}]", model.params.name(id)),
            checked: 1,
            max_abs_err: (analytic - numeric).abs(),
            passed: grads_agree(analytic, numeric, FD_REL_TOL, FD_ABS_TOL),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_tvaesynth, split, SplitSpec};

    fn small() -> TvaeConfig {
        TvaeConfig {
            epochs: 3,
            batch_size: 50,
            lr: 1e-3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = generate_tvaesynth(200, 3);
        let (tr, va, _) = split(&ds, &SplitSpec::new(0.6, 0.3, 0.1, 1)).unwrap();
        let (a, ra) = train(&small(), &tr, &va).unwrap();
        let (b, rb) = train(&small(), &tr, &va).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(ra, rb);
    }

    #[test]
    fn lambda_zero_leaves_epsilon_at_zero() {
        let ds = generate_tvaesynth(200, 3);
        let (tr, va, _) = split(&ds, &SplitSpec::new(0.6, 0.3, 0.1, 1)).unwrap();
        let cfg = TvaeConfig {
            lambda_tl: 0.0,
            ..small()
        };
        let (m, rep) = train(&cfg, &tr, &va).unwrap();
        assert_eq!(m.epsilon(), 0.0);
        assert!(rep.epochs.iter().all(|e| e.epsilon == 0.0));
        // with the regularizer on, ε moves
        let (m, _) = train(&small(), &tr, &va).unwrap();
        assert_ne!(m.epsilon(), 0.0);
    }

    #[test]
    fn best_epoch_has_minimum_validation_loss() {
        let ds = generate_tvaesynth(200, 5);
        let (tr, va, _) = split(&ds, &SplitSpec::new(0.6, 0.3, 0.1, 2)).unwrap();
        let (_, rep) = train(&small(), &tr, &va).unwrap();
        let min = rep.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(rep.epochs[rep.best_epoch].val_loss, min);
    }

    #[test]
    fn diverging_training_aborts_with_attribution() {
        let ds = generate_tvaesynth(100, 5);
        let (tr, va, _) = split(&ds, &SplitSpec::new(0.6, 0.3, 0.1, 2)).unwrap();
        let mut model = init_model(&small(), &tr).unwrap();
        let id = model.network_params("f10")[0];
        model.params.get_mut(id).data_mut()[0] = f64::NAN;
        match fit(&mut model, &tr, &va) {
            Err(TvaeError::NumericalAbort { epoch, term }) => {
                assert_eq!(epoch, 0);
                assert_eq!(term, "outcome_likelihood");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
