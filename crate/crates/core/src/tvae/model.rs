use rand::Rng;

use super::{TvaeConfig, TvaeError};
use crate::datasets::{Affine, CausalDataset, ColumnKind, StandardizeTarget, Standardizer};
use crate::diffcore::nn::Mlp;
use crate::diffcore::{sigmoid, Bound, ParamId, Tape, Tensor, Var};
use crate::distributions::{
    bernoulli_log_prob_logits, gaussian_log_prob, kl_to_standard_normal, reparam_sample, standard_normal,
    DiagGaussian,
};
use crate::tmle::{MinMax, OutcomeKind, PROPENSITY_CLAMP};
use crate::ParamSet;

/// Latent groups in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    T,
    Y,
    C,
    O,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::T, Factor::Y, Factor::C, Factor::O];

    pub fn name(self) -> &'static str {
        match self {
            Factor::T => "z_t",
            Factor::Y => "z_y",
            Factor::C => "z_c",
            Factor::O => "z_o",
        }
    }
}

#[derive(Clone, Debug)]
struct Encoder {
    mu: Mlp,
    log_var: Mlp,
}

/// Outcome and covariate transforms fitted on the training split.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transforms {
    pub standardizer: Standardizer,
    /// Only for bounded continuous outcomes.
    pub minmax: Option<MinMax>,
}

impl Transforms {
    pub fn fit(train: &CausalDataset, kind: OutcomeKind) -> Result<Self, TvaeError> {
        let mut which = vec![StandardizeTarget::ContinuousCovariates];
        if kind == OutcomeKind::UnboundedContinuous {
            which.push(StandardizeTarget::Outcome);
        }
        let minmax = match kind {
            OutcomeKind::BoundedContinuous => Some(MinMax::fit(&train.y)?),
            _ => None,
        };
        Ok(Self {
            standardizer: Standardizer::fit(train, &which),
            minmax,
        })
    }

    /// Maps an outcome-scale prediction back to original units.
    pub fn outcome_inverse(&self, v: f64) -> f64 {
        let v = match &self.minmax {
            Some(m) => m.unscale(v),
            None => v,
        };
        match &self.standardizer.outcome {
            Some(a) => a.inverse(v),
            None => v,
        }
    }

    pub fn outcome_affine(&self) -> Option<Affine> {
        self.standardizer.outcome
    }
}

/// Model-scale view of a dataset: covariates standardized, outcome on the
/// scale its likelihood expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Exogenous randomness of one objective evaluation: one standard-normal
/// block per factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub z: [Tensor; 4],
}

impl Noise {
    pub fn sample<R: Rng + ?Sized>(config: &TvaeConfig, n: usize, rng: &mut R) -> Self {
        let dims = [config.d_zt, config.d_zy, config.d_zc, config.d_zo];
        let z = dims.map(|d| standard_normal(rng, &[n, d]));
        Self { z }
    }

    /// Zero latent noise.
    pub fn zeros(config: &TvaeConfig, n: usize) -> Self {
        let dims = [config.d_zt, config.d_zy, config.d_zc, config.d_zo];
        Self {
            z: dims.map(|d| Tensor::zeros(&[n, d])),
        }
    }
}

/// Posterior parameters recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Posteriors {
    pub q: [Option<DiagGaussian>; 4],
}

/// Scalar terms of the training objective, each averaged over the batch.
#[derive(Clone, Copy, Debug)]
pub struct Objective {
    pub x_nll: Var,
    pub t_nll: Var,
    pub y_nll: Var,
    pub kl: Var,
    /// `−ELBO` per unit.
    pub neg_elbo: Var,
    pub xi: Option<Var>,
    pub total: Var,
}

impl Objective {
    /// Named term values, for abort attribution and logging.
    pub fn terms(&self, tape: &Tape) -> Vec<(&'static str, f64)> {
        let v = |x: Var| tape.value(x).data()[0];
        let mut out = vec![
            ("x_reconstruction", v(self.x_nll)),
            ("treatment_likelihood", v(self.t_nll)),
            ("outcome_likelihood", v(self.y_nll)),
            ("kl", v(self.kl)),
        ];
        if let Some(xi) = self.xi {
            out.push(("targeted_regularizer", v(xi)));
        }
        out
    }
}

/// Targeted VAE: four factor encoders (f1–f8), inference heads f9–f11,
/// generative heads h1–h6 and the fluctuation scalar `ε`.
#[derive(Clone, Debug)]
pub struct TvaeModel {
    pub(crate) config: TvaeConfig,
    pub(crate) params: ParamSet,
    kinds: Vec<ColumnKind>,
    encoders: [Option<Encoder>; 4],
    g_q: Mlp,
    q_q1: Mlp,
    q_q0: Mlp,
    g_p: Mlp,
    q_p1: Mlp,
    q_p0: Mlp,
    x_mu: Option<Mlp>,
    x_log_var: Option<Mlp>,
    x_bin: Option<Mlp>,
    epsilon: ParamId,
    pub(crate) transforms: Transforms,
    pub(crate) trained: bool,
}

impl TvaeModel {
    pub fn new<R: Rng + ?Sized>(config: TvaeConfig, kinds: Vec<ColumnKind>, rng: &mut R) -> Result<Self, TvaeError> {
        config.validate()?;
        if kinds.is_empty() {
            return Err(TvaeError::Config("at least one covariate is required".into()));
        }
        let m = kinds.len();
        let (h, l) = (config.hidden_neurons, config.hidden_layers);
        let mut params = ParamSet::new();
        let dims = [config.d_zt, config.d_zy, config.d_zc, config.d_zo];
        let mut encoders: [Option<Encoder>; 4] = [None, None, None, None];
        for (k, &d) in dims.iter().enumerate() {
            if d == 0 {
                continue;
            }
            let (a, b) = (2 * k + 1, 2 * k + 2);
            encoders[k] = Some(Encoder {
                mu: Mlp::new(&mut params, rng, &format!("f{a}"), m, h, l, d),
                log_var: Mlp::new(&mut params, rng, &format!("f{b}"), m, h, l, d),
            });
        }
        let d_g = config.d_zt + config.d_zc;
        let d_q = config.d_zy + config.d_zc;
        let d_all = config.total_latent();
        let n_cont = kinds.iter().filter(|k| **k == ColumnKind::Continuous).count();
        let n_bin = m - n_cont;
        let g_q = Mlp::new(&mut params, rng, "f9", d_g, h, l, 1);
        let q_q1 = Mlp::new(&mut params, rng, "f10", d_q, h, l, 1);
        let q_q0 = Mlp::new(&mut params, rng, "f11", d_q, h, l, 1);
        let g_p = Mlp::new(&mut params, rng, "h1", d_g, h, l, 1);
        let q_p1 = Mlp::new(&mut params, rng, "h2", d_q, h, l, 1);
        let q_p0 = Mlp::new(&mut params, rng, "h3", d_q, h, l, 1);
        let (x_mu, x_log_var) = if n_cont > 0 {
            (
                Some(Mlp::new(&mut params, rng, "h4", d_all, h, l, n_cont)),
                Some(Mlp::new(&mut params, rng, "h5", d_all, h, l, n_cont)),
            )
        } else {
            (None, None)
        };
        let x_bin = (n_bin > 0).then(|| Mlp::new(&mut params, rng, "h6", d_all, h, l, n_bin));
        let epsilon = params.add("epsilon", Tensor::zeros(&[1]));
        Ok(Self {
            config,
            params,
            kinds,
            encoders,
            g_q,
            q_q1,
            q_q0,
            g_p,
            q_p1,
            q_p0,
            x_mu,
            x_log_var,
            x_bin,
            epsilon,
            transforms: Transforms::default(),
            trained: false,
        })
    }

    pub fn config(&self) -> &TvaeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn transforms(&self) -> &Transforms {
        &self.transforms
    }

    pub fn set_transforms(&mut self, t: Transforms) {
        self.transforms = t;
    }

    pub fn epsilon_id(&self) -> ParamId {
        self.epsilon
    }

    pub fn epsilon(&self) -> f64 {
        self.params.get(self.epsilon).data()[0]
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Marks externally supplied weights as ready for effect estimation.
    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Parameter ids of the network whose names start with `prefix.`
    /// (`"f9"`, `"h1"`, ...).
    pub fn network_params(&self, prefix: &str) -> Vec<ParamId> {
        let p = format!("{prefix}.");
        self.params.ids().filter(|&id| self.params.name(id).starts_with(&p)).collect()
    }

    /// Applies the fitted transforms to a dataset.
    pub fn prepare(&self, data: &CausalDataset) -> Result<Batch, TvaeError> {
        if data.kinds != self.kinds {
            return Err(TvaeError::Input("covariate schema differs from the model's".into()));
        }
        if !data.x.all_finite() {
            return Err(TvaeError::Input("covariates contain non-finite values".into()));
        }
        let d = self.transforms.standardizer.apply(data);
        let y = match (&self.transforms.minmax, self.config.outcome_kind) {
            (Some(mm), _) => d.y.iter().map(|&v| mm.scale(v).clamp(0.0, 1.0)).collect(),
            (None, OutcomeKind::Binary) => {
                if d.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(TvaeError::Input("binary outcome must be 0 or 1".into()));
                }
                d.y
            }
            _ => d.y,
        };
        Ok(Batch { x: d.x, t: d.t, y })
    }

    /// Posterior parameters for standardized covariates `x`.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Posteriors, TvaeError> {
        if !tape.value(x).all_finite() {
            return Err(TvaeError::Input("covariates contain non-finite values".into()));
        }
        let mut q = [None; 4];
        for (k, enc) in self.encoders.iter().enumerate() {
            if let Some(e) = enc {
                let mu = e.mu.forward(tape, bound, x)?;
                let lv = e.log_var.forward(tape, bound, x)?;
                q[k] = Some(DiagGaussian::from_log_var(tape, mu, lv)?);
            }
        }
        Ok(Posteriors { q })
    }

    /// `[n×0]` stand-in when a factor is disabled.
    fn sample_factor(&self, tape: &mut Tape, post: &Posteriors, noise: &Noise, k: usize, n: usize) -> Result<Var, TvaeError> {
        match &post.q[k] {
            Some(q) => Ok(reparam_sample(tape, q, &noise.z[k])?),
            None => Ok(tape.constant(Tensor::zeros(&[n, 0]))),
        }
    }

    fn head_inputs(&self, tape: &mut Tape, z: &[Var; 4]) -> Result<(Var, Var, Var), TvaeError> {
        let tc = tape.concat_cols(&[z[0], z[2]])?;
        let yc = tape.concat_cols(&[z[1], z[2]])?;
        let all = if self.config.d_zo > 0 {
            tape.concat_cols(&[z[0], z[1], z[2], z[3]])?
        } else {
            tape.concat_cols(&[z[0], z[1], z[2]])?
        };
        Ok((tc, yc, all))
    }

    /// `t·a + (1 − t)·b` with `t` of shape `[n×1]`.
    fn route(tape: &mut Tape, t: Var, a: Var, b: Var) -> Result<Var, TvaeError> {
        let one = tape.scalar(1.0);
        let not_t = tape.sub(one, t)?;
        let ta = tape.mul(t, a)?;
        let tb = tape.mul(not_t, b)?;
        Ok(tape.add(ta, tb)?)
    }

    /// Negative per-unit log-likelihood of `y` under an outcome head output.
    fn outcome_nll(&self, tape: &mut Tape, y: Var, out: Var) -> Result<Var, TvaeError> {
        let lp = match self.config.outcome_kind {
            OutcomeKind::UnboundedContinuous => {
                let one = tape.scalar(1.0);
                gaussian_log_prob(tape, y, out, one)?
            }
            _ => bernoulli_log_prob_logits(tape, y, out)?,
        };
        Ok(tape.neg(lp)?)
    }

    /// Full objective `mean(−ELBO) + λ·mean(ξ)` on one batch.
    pub fn objective(&self, tape: &mut Tape, bound: &Bound, batch: &Batch, noise: &Noise) -> Result<Objective, TvaeError> {
        self.objective_with(tape, bound, batch, noise, self.config.lambda_tl > 0.0)
    }

    fn objective_with(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &Batch,
        noise: &Noise,
        with_xi: bool,
    ) -> Result<Objective, TvaeError> {
        let n = batch.len();
        let x = tape.constant(batch.x.clone());
        let post = self.encode(tape, bound, x)?;
        let z: [Var; 4] = [
            self.sample_factor(tape, &post, noise, 0, n)?,
            self.sample_factor(tape, &post, noise, 1, n)?,
            self.sample_factor(tape, &post, noise, 2, n)?,
            self.sample_factor(tape, &post, noise, 3, n)?,
        ];
        let (tc, yc, all) = self.head_inputs(tape, &z)?;
        let t = tape.constant(Tensor::new(vec![n, 1], batch.t.clone())?);
        let y = tape.constant(Tensor::new(vec![n, 1], batch.y.clone())?);

        // covariate reconstruction
        let mut x_terms = Vec::new();
        let cont = self.continuous_columns();
        if let (Some(hm), Some(hv)) = (&self.x_mu, &self.x_log_var) {
            let xc = tape.constant(batch.x.select_cols(&cont));
            let mu = hm.forward(tape, bound, all)?;
            let lv = hv.forward(tape, bound, all)?;
            let var = tape.exp(lv)?;
            let var = tape.clamp(var, crate::distributions::VARIANCE_FLOOR, f64::INFINITY);
            x_terms.push(gaussian_log_prob(tape, xc, mu, var)?);
        }
        if let Some(hb) = &self.x_bin {
            let xb = tape.constant(batch.x.select_cols(&self.binary_columns()));
            let logits = hb.forward(tape, bound, all)?;
            x_terms.push(bernoulli_log_prob_logits(tape, xb, logits)?);
        }
        let mut x_lp = x_terms[0];
        for &v in &x_terms[1..] {
            x_lp = tape.add(x_lp, v)?;
        }
        let x_nll = tape.neg(x_lp)?;

        // treatment: generative and inference propensity heads
        let gp_logit = self.g_p.forward(tape, bound, tc)?;
        let gq_logit = self.g_q.forward(tape, bound, tc)?;
        let lp_gp = bernoulli_log_prob_logits(tape, t, gp_logit)?;
        let lp_gq = bernoulli_log_prob_logits(tape, t, gq_logit)?;
        let t_lp = tape.add(lp_gp, lp_gq)?;
        let t_nll = tape.neg(t_lp)?;

        // outcome: Q̂_q with observed t; Q̂_p averaged over t̂ ~ Bern(ĝ_p)
        let qq1 = self.q_q1.forward(tape, bound, yc)?;
        let qq0 = self.q_q0.forward(tape, bound, yc)?;
        let qq = Self::route(tape, t, qq1, qq0)?;
        let p = tape.sigmoid(gp_logit)?;
        let qp1 = self.q_p1.forward(tape, bound, yc)?;
        let qp0 = self.q_p0.forward(tape, bound, yc)?;
        let nll_p1 = self.outcome_nll(tape, y, qp1)?;
        let nll_p0 = self.outcome_nll(tape, y, qp0)?;
        // [n×1] → [n] to match the per-unit likelihoods
        let p = tape.sum(p, Some(1))?;
        let one = tape.scalar(1.0);
        let not_p = tape.sub(one, p)?;
        let w1 = tape.mul(p, nll_p1)?;
        let w0 = tape.mul(not_p, nll_p0)?;
        let nll_p = tape.add(w1, w0)?;
        let nll_q = self.outcome_nll(tape, y, qq)?;
        let y_nll = tape.add(nll_q, nll_p)?;

        let mut kl = None;
        for q in post.q.iter().flatten() {
            let k = kl_to_standard_normal(tape, q)?;
            kl = Some(match kl {
                Some(acc) => tape.add(acc, k)?,
                None => k,
            });
        }
        let kl = kl.expect("at least three factors");

        let rec = tape.add(x_nll, t_nll)?;
        let rec = tape.add(rec, y_nll)?;
        let kl_w = tape.scale(kl, self.config.beta)?;
        let per_unit = tape.add(rec, kl_w)?;
        let neg_elbo = tape.mean(per_unit, None)?;

        let xi = if with_xi {
            Some(self.xi_from_heads(tape, bound, t, y, qq, gp_logit)?)
        } else {
            None
        };
        let total = match xi {
            Some(v) => {
                let w = tape.scale(v, self.config.lambda_tl)?;
                tape.add(neg_elbo, w)?
            }
            None => neg_elbo,
        };
        let x_nll = tape.mean(x_nll, None)?;
        let t_nll = tape.mean(t_nll, None)?;
        let y_nll = tape.mean(y_nll, None)?;
        let kl = tape.mean(kl, None)?;
        Ok(Objective {
            x_nll,
            t_nll,
            y_nll,
            kl,
            neg_elbo,
            xi,
            total,
        })
    }

    /// `mean(−ELBO)` alone.
    pub fn elbo_loss(&self, tape: &mut Tape, bound: &Bound, batch: &Batch, noise: &Noise) -> Result<Var, TvaeError> {
        Ok(self.objective_with(tape, bound, batch, noise, false)?.neg_elbo)
    }

    /// `mean(ξ)` alone: the fluctuation loss of the inference outcome head
    /// around `ε`, with propensities from `ĝ_p` clamped to `[0.01, 0.99]`.
    pub fn targeted_regularizer(&self, tape: &mut Tape, bound: &Bound, batch: &Batch, noise: &Noise) -> Result<Var, TvaeError> {
        let n = batch.len();
        let x = tape.constant(batch.x.clone());
        let post = self.encode(tape, bound, x)?;
        let z: [Var; 4] = [
            self.sample_factor(tape, &post, noise, 0, n)?,
            self.sample_factor(tape, &post, noise, 1, n)?,
            self.sample_factor(tape, &post, noise, 2, n)?,
            self.sample_factor(tape, &post, noise, 3, n)?,
        ];
        let (tc, yc, _) = self.head_inputs(tape, &z)?;
        let t = tape.constant(Tensor::new(vec![n, 1], batch.t.clone())?);
        let y = tape.constant(Tensor::new(vec![n, 1], batch.y.clone())?);
        let qq1 = self.q_q1.forward(tape, bound, yc)?;
        let qq0 = self.q_q0.forward(tape, bound, yc)?;
        let qq = Self::route(tape, t, qq1, qq0)?;
        let gp_logit = self.g_p.forward(tape, bound, tc)?;
        self.xi_from_heads(tape, bound, t, y, qq, gp_logit)
    }

    fn xi_from_heads(&self, tape: &mut Tape, bound: &Bound, t: Var, y: Var, q0: Var, gp_logit: Var) -> Result<Var, TvaeError> {
        let g = tape.sigmoid(gp_logit)?;
        let (lo, hi) = PROPENSITY_CLAMP;
        let g = tape.clamp(g, lo, hi);
        let g = if self.config.stop_propensity_gradient {
            tape.stop_gradient(g)
        } else {
            g
        };
        // H = t/g − (1 − t)/(1 − g)
        let one = tape.scalar(1.0);
        let not_t = tape.sub(one, t)?;
        let not_g = tape.sub(one, g)?;
        let a = tape.div(t, g)?;
        let b = tape.div(not_t, not_g)?;
        let h = tape.sub(a, b)?;
        let eps = bound.var(self.epsilon);
        let shift = tape.mul(h, eps)?;
        let fluct = tape.add(q0, shift)?;
        let per = match self.config.outcome_kind {
            OutcomeKind::UnboundedContinuous => {
                let d = tape.sub(y, fluct)?;
                tape.square(d)?
            }
            _ => tape.sigmoid_bce(fluct, y)?,
        };
        Ok(tape.mean(per, None)?)
    }

    pub fn continuous_columns(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&j| self.kinds[j] == ColumnKind::Continuous).collect()
    }

    pub fn binary_columns(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&j| self.kinds[j] == ColumnKind::Binary).collect()
    }

    /// Posterior means and variances `[n×D]` per factor, off-tape.
    pub(crate) fn posterior_params(&self, x: &Tensor) -> Result<[(Tensor, Tensor); 4], TvaeError> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let post = self.encode(&mut tape, &bound, xv)?;
        let n = x.rows();
        let mut out: [(Tensor, Tensor); 4] = std::array::from_fn(|_| (Tensor::zeros(&[n, 0]), Tensor::zeros(&[n, 0])));
        for (k, q) in post.q.iter().enumerate() {
            if let Some(q) = q {
                out[k] = (tape.value(q.mu).clone(), tape.value(q.sigma2).clone());
            }
        }
        Ok(out)
    }

    /// Head outputs for given latents: `(ĝ_p(1|z), Q̂_q(1, z), Q̂_q(0, z))` on
    /// the model's outcome scale (probabilities for logistic outcomes).
    pub(crate) fn heads(&self, z: &[Tensor; 4]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), TvaeError> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let zv = [
            tape.constant(z[0].clone()),
            tape.constant(z[1].clone()),
            tape.constant(z[2].clone()),
            tape.constant(z[3].clone()),
        ];
        let (tc, yc, _) = self.head_inputs(&mut tape, &zv)?;
        let g = self.g_p.forward(&mut tape, &bound, tc)?;
        let q1 = self.q_q1.forward(&mut tape, &bound, yc)?;
        let q0 = self.q_q0.forward(&mut tape, &bound, yc)?;
        let logistic = self.config.outcome_kind != OutcomeKind::UnboundedContinuous;
        let out = |v: Var, squash: bool| -> Vec<f64> {
            tape.value(v).data().iter().map(|&l| if squash { sigmoid(l) } else { l }).collect()
        };
        Ok((out(g, true), out(q1, logistic), out(q0, logistic)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_tvaesynth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(cfg: TvaeConfig) -> (TvaeModel, Batch) {
        let ds = generate_tvaesynth(32, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = TvaeModel::new(cfg.clone(), ds.kinds.clone(), &mut rng).unwrap();
        model.set_transforms(Transforms::fit(&ds, cfg.outcome_kind).unwrap());
        let batch = model.prepare(&ds).unwrap();
        (model, batch)
    }

    #[test]
    fn encoder_shapes() {
        let (model, batch) = setup(TvaeConfig::default());
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let x = tape.constant(batch.x.clone());
        let post = model.encode(&mut tape, &bound, x).unwrap();
        let shapes: Vec<Vec<usize>> = post.q.iter().map(|q| tape.value(q.unwrap().mu).shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![32, 2], vec![32, 2], vec![32, 2], vec![32, 1]]);
    }

    #[test]
    fn zero_weights_give_constant_posterior() {
        let (mut model, batch) = setup(TvaeConfig::default());
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let is_bias = model.params.name(id).ends_with(".bias");
            let t = model.params.get_mut(id);
            let fill = if is_bias { 0.3 } else { 0.0 };
            t.data_mut().iter_mut().for_each(|v| *v = fill);
        }
        let [(mu, s2), ..] = model.posterior_params(&batch.x).unwrap();
        for v in mu.data() {
            assert!((v - 0.3).abs() < 1e-12);
        }
        for v in s2.data() {
            assert!((v - 0.3f64.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_term_is_sum_of_factor_kls() {
        let (model, batch) = setup(TvaeConfig::default());
        let noise = Noise::zeros(&model.config, batch.len());
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let obj = model.objective(&mut tape, &bound, &batch, &noise).unwrap();
        let x = tape.constant(batch.x.clone());
        let post = model.encode(&mut tape, &bound, x).unwrap();
        let mut total = 0.0;
        for q in post.q.iter().flatten() {
            let k = kl_to_standard_normal(&mut tape, q).unwrap();
            total += tape.value(k).mean();
        }
        assert!((tape.value(obj.kl).item().unwrap() - total).abs() < 1e-12);
    }

    #[test]
    fn xi_at_zero_epsilon_is_plain_outcome_loss() {
        let (model, batch) = setup(TvaeConfig::default());
        let noise = Noise::zeros(&model.config, batch.len());
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let xi = model.targeted_regularizer(&mut tape, &bound, &batch, &noise).unwrap();
        let xi = tape.value(xi).item().unwrap();
        // recompute (y − Q̂⁰(t))² from the heads at the same latents
        let post = model.posterior_params(&batch.x).unwrap();
        let z = post.map(|(mu, _)| mu);
        let (_, q1, q0) = model.heads(&z).unwrap();
        let n = batch.len();
        let direct = (0..n)
            .map(|i| {
                let q = if batch.t[i] == 1.0 { q1[i] } else { q0[i] };
                (batch.y[i] - q).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        assert!((xi - direct).abs() < 1e-12, "{xi} vs {direct}");
    }

    #[test]
    fn propensity_heads_receive_no_gradient_from_xi() {
        let (model, batch) = setup(TvaeConfig::default());
        let noise = Noise::zeros(&model.config, batch.len());
        let mut blocked = model.network_params("h1");
        blocked.extend(model.network_params("f9"));
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let xi = model.targeted_regularizer(&mut tape, &bound, &batch, &noise).unwrap();
        tape.backward(xi).unwrap();
        for &id in &blocked {
            assert!(tape.grad_or_zeros(bound.var(id)).data().iter().all(|&g| g == 0.0));
        }
        // the ELBO does reach both heads
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let elbo = model.elbo_loss(&mut tape, &bound, &batch, &noise).unwrap();
        tape.backward(elbo).unwrap();
        for prefix in ["h1", "f9"] {
            let any = model
                .network_params(prefix)
                .iter()
                .any(|&id| tape.grad_or_zeros(bound.var(id)).data().iter().any(|&g| g != 0.0));
            assert!(any, "{prefix} has no ELBO gradient");
        }
    }

    #[test]
    fn without_stop_propensity_head_gets_gradient() {
        let (mut model, batch) = setup(TvaeConfig {
            stop_propensity_gradient: false,
            ..Default::default()
        });
        // a nonzero ε is needed for H to enter the loss
        let e = model.epsilon_id();
        model.params.get_mut(e).data_mut()[0] = 0.05;
        let noise = Noise::zeros(&model.config, batch.len());
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let xi = model.targeted_regularizer(&mut tape, &bound, &batch, &noise).unwrap();
        tape.backward(xi).unwrap();
        let any = model
            .network_params("h1")
            .iter()
            .any(|&id| tape.grad_or_zeros(bound.var(id)).data().iter().any(|&g| g != 0.0));
        assert!(any);
    }

    #[test]
    fn schema_without_zo() {
        let (model, batch) = setup(TvaeConfig {
            d_zo: 0,
            d_zc: 3,
            ..Default::default()
        });
        assert!(model.network_params("f7").is_empty());
        let noise = Noise::zeros(&model.config, batch.len());
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let obj = model.objective(&mut tape, &bound, &batch, &noise).unwrap();
        assert!(tape.value(obj.total).item().unwrap().is_finite());
    }

    #[test]
    fn nan_covariates_rejected() {
        let (model, mut batch) = setup(TvaeConfig::default());
        batch.x.data_mut()[3] = f64::NAN;
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let x = tape.constant(batch.x.clone());
        assert!(matches!(model.encode(&mut tape, &bound, x), Err(TvaeError::Input(_))));
    }
}
