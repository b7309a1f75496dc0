use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{TvaeError, TvaeModel};
use crate::datasets::CausalDataset;
use crate::Tensor;

/// Treatment used when simulating the factual outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TSource {
    #[default]
    Observed,
    /// `t̂ ~ Bern(ĝ_p)` per draw.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
    pub tau_hat: Vec<f64>,
    pub ate_hat: f64,
    /// Expected outcome under the chosen treatment source.
    pub y_hat: Vec<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one unit derived from its covariate bits, so draws follow the
/// unit rather than its position.
fn unit_seed(seed: u64, row: &[f64]) -> u64 {
    row.iter().fold(splitmix(seed), |h, v| splitmix(h ^ v.to_bits()))
}

/// Monte Carlo effect estimates: `S = n_effect_samples` latent draws from
/// `q(z|x)` per unit, averaging `Q̂(1, z)` and `Q̂(0, z)`.
pub fn estimate_effects(
    model: &TvaeModel,
    data: &CausalDataset,
    t_source: TSource,
    seed: u64,
) -> Result<EffectEstimates, TvaeError> {
    estimate_effects_with(model, data, t_source, seed, model.config.n_effect_samples)
}

pub fn estimate_effects_with(
    model: &TvaeModel,
    data: &CausalDataset,
    t_source: TSource,
    seed: u64,
    samples: usize,
) -> Result<EffectEstimates, TvaeError> {
    if !model.trained {
        return Err(TvaeError::Contract("effect estimation needs a trained model".into()));
    }
    if samples == 0 {
        return Err(TvaeError::Contract("at least one effect sample is required".into()));
    }
    let batch = model.prepare(data)?;
    let n = batch.len();
    let post = model.posterior_params(&batch.x)?;
    let dims: Vec<usize> = post.iter().map(|(mu, _)| mu.cols()).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| ChaCha8Rng::seed_from_u64(unit_seed(seed, data.x.row(i))))
        .collect();

    let (mut q1, mut q0, mut yh) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..samples {
        let mut z: [Vec<f64>; 4] = std::array::from_fn(|k| Vec::with_capacity(n * dims[k]));
        let mut u = Vec::with_capacity(n);
        for (i, rng) in rngs.iter_mut().enumerate() {
            for k in 0..4 {
                let (mu, s2) = &post[k];
                for d in 0..dims[k] {
                    let e: f64 = rng.sample(StandardNormal);
                    let j = i * dims[k] + d;
                    z[k].push(mu.data()[j] + s2.data()[j].sqrt() * e);
                }
            }
            u.push(rng.random::<f64>());
        }
        let zt: [Tensor; 4] = std::array::from_fn(|k| Tensor::new(vec![n, dims[k]], std::mem::take(&mut z[k])).expect("n×d"));
        let (g, a, b) = model.heads(&zt)?;
        for i in 0..n {
            q1[i] += a[i];
            q0[i] += b[i];
            let t = match t_source {
                TSource::Observed => batch.t[i],
                TSource::Sampled => (u[i] < g[i]) as u8 as f64,
            };
            yh[i] += if t == 1.0 { a[i] } else { b[i] };
        }
    }
    let s = samples as f64;
    let tf = &model.transforms;
    let scale = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| tf.outcome_inverse(x / s)).collect() };
    let (q1, q0, y_hat) = (scale(q1), scale(q0), scale(yh));
    let tau_hat: Vec<f64> = q1.iter().zip(&q0).map(|(a, b)| a - b).collect();
    let ate_hat = tau_hat.iter().sum::<f64>() / n as f64;
    Ok(EffectEstimates {
        q1,
        q0,
        tau_hat,
        ate_hat,
        y_hat,
    })
}
