//! Three-step targeted maximum likelihood estimation of the average
//! treatment effect, with efficient influence curve diagnostics.
//!
//! The targeting step is usable on any `(Q̂, ĝ)` pair: [`target`] takes
//! plain prediction vectors, so the TVAE heads can be plugged in directly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::CausalDataset;
use crate::diffcore::nn::Mlp;
use crate::diffcore::{log_sigmoid, sigmoid, AdamConfig, AdamState, DiffError, ParamSet, Tape, Tensor};

pub const PROPENSITY_CLAMP: (f64, f64) = (0.01, 0.99);
/// Stopping rule for the fluctuation Newton iterations.
pub const SCORE_TOL: f64 = 1e-10;
/// Outcome predictions entering the logistic link are kept inside this band.
const OUTCOME_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TmleError {
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("fluctuation did not converge: {0}")]
    Convergence(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Binary,
    BoundedContinuous,
    #[default]
    UnboundedContinuous,
}

impl OutcomeKind {
    /// Logistic link for outcomes in `[0, 1]`, identity otherwise.
    pub fn link(self) -> Link {
        match self {
            OutcomeKind::Binary | OutcomeKind::BoundedContinuous => Link::Logistic,
            OutcomeKind::UnboundedContinuous => Link::Identity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logistic,
    Identity,
}

impl Link {
    fn forward(self, q: f64) -> f64 {
        match self {
            Link::Logistic => {
                let q = q.clamp(OUTCOME_CLAMP, 1.0 - OUTCOME_CLAMP);
                (q / (1.0 - q)).ln()
            }
            Link::Identity => q,
        }
    }

    fn inverse(self, l: f64) -> f64 {
        match self {
            Link::Logistic => sigmoid(l),
            Link::Identity => l,
        }
    }

    /// Mean loss of linear predictor `l` against target `y`: cross-entropy
    /// for the logistic link, half squared error for identity.
    fn loss(self, l: f64, y: f64) -> f64 {
        match self {
            Link::Logistic => -(y * log_sigmoid(l) + (1.0 - y) * log_sigmoid(-l)),
            Link::Identity => 0.5 * (l - y) * (l - y),
        }
    }
}

/// `H = 1/g1` for treated units, `−1/(1−g1)` for controls.
pub fn clever_covariate(t: &[f64], g1: &[f64]) -> Vec<f64> {
    t.iter()
        .zip(g1)
        .map(|(&ti, &g)| if ti == 1.0 { 1.0 / g } else { -1.0 / (1.0 - g) })
        .collect()
}

/// Clamps propensities to [`PROPENSITY_CLAMP`]; returns the count clamped.
pub fn clamp_propensity(g1: &mut [f64]) -> usize {
    let (lo, hi) = PROPENSITY_CLAMP;
    let mut n = 0;
    for g in g1.iter_mut() {
        if *g < lo || *g > hi {
            *g = g.clamp(lo, hi);
            n += 1;
        }
    }
    n
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop when the training loss changes by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub l2: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            l2: 0.0,
        }
    }
}

/// Linear predictor `Xw + b` under a link, fitted by gradient descent with an
/// Armijo backtracking line search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub link: Link,
}

impl LinearModel {
    pub fn fit(x: &Tensor, y: &[f64], link: Link, opts: &FitOptions) -> Result<Self, TmleError> {
        let (n, m) = (x.rows(), x.cols());
        if n != y.len() || n == 0 {
            return Err(TmleError::Input(format!("{n} rows vs {} targets", y.len())));
        }
        let mut theta = vec![0.0; m + 1];
        if link == Link::Identity {
            theta[m] = y.iter().sum::<f64>() / n as f64;
        }
        let objective = |th: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                let l = dot(x.row(i), &th[..m]) + th[m];
                s += link.loss(l, y[i]);
            }
            s / n as f64 + 0.5 * opts.l2 * th[..m].iter().map(|v| v * v).sum::<f64>()
        };
        let gradient = |th: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; m + 1];
            for i in 0..n {
                let row = x.row(i);
                let l = dot(row, &th[..m]) + th[m];
                let r = link.inverse(l) - y[i];
                for (gj, xj) in g.iter_mut().zip(row) {
                    *gj += r * xj;
                }
                g[m] += r;
            }
            g.iter_mut().for_each(|v| *v /= n as f64);
            for j in 0..m {
                g[j] += opts.l2 * th[j];
            }
            g
        };

        let mut loss = objective(&theta);
        let mut step = 1.0;
        for _ in 0..opts.max_iter {
            let g = gradient(&theta);
            let gg: f64 = g.iter().map(|v| v * v).sum();
            if gg == 0.0 {
                break;
            }
            step *= 2.0;
            let (mut next, mut next_loss);
            loop {
                next = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect::<Vec<_>>();
                next_loss = objective(&next);
                if next_loss <= loss - 0.5 * step * gg || step < 1e-12 {
                    break;
                }
                step *= 0.5;
            }
            let change = (loss - next_loss).abs();
            theta = next;
            loss = next_loss;
            if !loss.is_finite() {
                return Err(TmleError::Convergence("non-finite loss while fitting".into()));
            }
            if change < opts.tol {
                break;
            }
        }
        Ok(Self {
            b: theta[m],
            w: theta[..m].to_vec(),
            link,
        })
    }

    pub fn predict(&self, x: &Tensor) -> Vec<f64> {
        (0..x.rows())
            .map(|i| self.link.inverse(dot(x.row(i), &self.w) + self.b))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpOptions {
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self {
            hidden: 32,
            layers: 2,
            lr: 1e-2,
            epochs: 500,
            seed: 0,
        }
    }
}

/// ELU network trained full-batch with Adam.
#[derive(Clone, Debug)]
pub struct MlpModel {
    params: ParamSet,
    net: Mlp,
    link: Link,
}

impl MlpModel {
    pub fn fit(x: &Tensor, y: &[f64], link: Link, opts: &MlpOptions, tol: f64) -> Result<Self, TmleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut params = ParamSet::new();
        let net = Mlp::new(&mut params, &mut rng, "mlp", x.cols(), opts.hidden, opts.layers, 1);
        let mut adam = AdamState::new(
            AdamConfig {
                lr: opts.lr,
                ..AdamConfig::default()
            },
            &params,
        );
        let target = Tensor::new(vec![y.len(), 1], y.to_vec())?;
        let mut prev = f64::INFINITY;
        for _ in 0..opts.epochs {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let xv = tape.constant(x.clone());
            let out = net.forward(&mut tape, &bound, xv)?;
            let yv = tape.constant(target.clone());
            let per = match link {
                Link::Logistic => tape.sigmoid_bce(out, yv)?,
                Link::Identity => {
                    let d = tape.sub(out, yv)?;
                    let sq = tape.square(d)?;
                    tape.scale(sq, 0.5)?
                }
            };
            let loss = tape.mean(per, None)?;
            let lv = tape.value(loss).item()?;
            tape.backward(loss)?;
            let grads = params.gradients(&tape, &bound);
            adam.step(&mut params, &grads)?;
            if (prev - lv).abs() < tol {
                break;
            }
            prev = lv;
        }
        Ok(Self { params, net, link })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>, TmleError> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.net.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(out).data().iter().map(|&l| self.link.inverse(l)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    #[default]
    LogisticLinear,
    Mlp(MlpOptions),
}

#[derive(Clone, Debug)]
pub enum BaseLearner {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl BaseLearner {
    pub fn fit(kind: &LearnerKind, x: &Tensor, y: &[f64], link: Link, opts: &FitOptions) -> Result<Self, TmleError> {
        Ok(match kind {
            LearnerKind::LogisticLinear => BaseLearner::Linear(LinearModel::fit(x, y, link, opts)?),
            LearnerKind::Mlp(o) => BaseLearner::Mlp(MlpModel::fit(x, y, link, o, opts.tol)?),
        })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>, TmleError> {
        match self {
            BaseLearner::Linear(m) => Ok(m.predict(x)),
            BaseLearner::Mlp(m) => m.predict(x),
        }
    }
}

/// `[x | t]` design matrix for the outcome regression.
fn with_treatment(x: &Tensor, t: &[f64]) -> Tensor {
    let (n, m) = (x.rows(), x.cols());
    let mut data = Vec::with_capacity(n * (m + 1));
    for (i, &ti) in t.iter().enumerate().take(n) {
        data.extend_from_slice(x.row(i));
        data.push(ti);
    }
    Tensor::new(vec![n, m + 1], data).expect("n×(m+1)")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmleOptions {
    #[serde(default)]
    pub outcome_learner: LearnerKind,
    #[serde(default)]
    pub propensity_learner: LearnerKind,
    #[serde(default)]
    pub outcome_kind: OutcomeKind,
    #[serde(default)]
    pub fit: FitOptions,
}

/// Outcome values mapped onto `[0, 1]` for the logistic fluctuation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lo: f64,
    pub hi: f64,
}

impl MinMax {
    pub fn fit(y: &[f64]) -> Result<Self, TmleError> {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(TmleError::Degenerate("outcome is constant".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    pub fn unscale(&self, v: f64) -> f64 {
        v * (self.hi - self.lo) + self.lo
    }
}

/// Steps (1) and (2): outcome regression on `(x, t)` and propensity on `x`.
pub fn fit_initial(data: &CausalDataset, opts: &TmleOptions) -> Result<(BaseLearner, BaseLearner), TmleError> {
    let treated = data.t.iter().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == data.n() {
        return Err(TmleError::Degenerate("treatment column has a single class".into()));
    }
    let (y, link) = match opts.outcome_kind {
        OutcomeKind::UnboundedContinuous => (data.y.clone(), Link::Identity),
        OutcomeKind::Binary => (data.y.clone(), Link::Logistic),
        OutcomeKind::BoundedContinuous => {
            let mm = MinMax::fit(&data.y)?;
            (data.y.iter().map(|&v| mm.scale(v)).collect(), Link::Logistic)
        }
    };
    let q = BaseLearner::fit(&opts.outcome_learner, &with_treatment(&data.x, &data.t), &y, link, &opts.fit)?;
    let g = BaseLearner::fit(&opts.propensity_learner, &data.x, &data.t, Link::Logistic, &opts.fit)?;
    Ok((q, g))
}

/// One-dimensional fit of the fluctuation parameter `ε` with offset
/// `link(Q̂⁰)` and covariate `H`. Logistic: Newton iterations until the
/// mean score is below [`SCORE_TOL`]. Identity: `ΣH(y − Q̂⁰)/ΣH²`.
pub fn fluctuate(q_obs: &[f64], h: &[f64], y: &[f64], link: Link) -> Result<f64, TmleError> {
    if q_obs.len() != h.len() || h.len() != y.len() || h.is_empty() {
        return Err(TmleError::Input("fluctuate inputs differ in length".into()));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(TmleError::Input("clever covariate is not finite".into()));
    }
    let n = h.len() as f64;
    match link {
        Link::Identity => {
            let num: f64 = h.iter().zip(y).zip(q_obs).map(|((hi, yi), qi)| hi * (yi - qi)).sum();
            let den: f64 = h.iter().map(|v| v * v).sum();
            if den == 0.0 {
                return Err(TmleError::Degenerate("clever covariate is identically zero".into()));
            }
            Ok(num / den)
        }
        Link::Logistic => {
            let offset: Vec<f64> = q_obs.iter().map(|&q| link.forward(q)).collect();
            let loss = |e: f64| -> f64 {
                offset
                    .iter()
                    .zip(h)
                    .zip(y)
                    .map(|((o, hi), yi)| link.loss(o + e * hi, *yi))
                    .sum::<f64>()
                    / n
            };
            let mut eps = 0.0;
            for _ in 0..200 {
                let (mut g, mut hess) = (0.0, 0.0);
                for ((o, hi), yi) in offset.iter().zip(h).zip(y) {
                    let p = sigmoid(o + eps * hi);
                    g += hi * (p - yi);
                    hess += hi * hi * p * (1.0 - p);
                }
                g /= n;
                hess /= n;
                if g.abs() < SCORE_TOL {
                    return Ok(eps);
                }
                let mut delta = if hess > 0.0 { -g / hess } else { -g };
                let base = loss(eps);
                // damped Newton: halve until the loss does not increase
                // beyond rounding
                let slack = 1e-14 * (1.0 + base.abs());
                let mut tries = 0;
                while loss(eps + delta) > base + slack && tries < 60 {
                    delta *= 0.5;
                    tries += 1;
                }
                eps += delta;
                if !eps.is_finite() {
                    return Err(TmleError::Convergence("fluctuation diverged".into()));
                }
            }
            Err(TmleError::Convergence(format!("score above {SCORE_TOL} after 200 Newton steps")))
        }
    }
}

/// Efficient influence curve of the ATE at `(Q*, g)`:
/// `H(y − Q*(t)) + Q*(1) − Q*(0) − ate`.
pub fn efficient_ic(t: &[f64], y: &[f64], q0: &[f64], q1: &[f64], g1: &[f64], ate: f64) -> Vec<f64> {
    let h = clever_covariate(t, g1);
    (0..t.len())
        .map(|i| {
            let qt = if t[i] == 1.0 { q1[i] } else { q0[i] };
            h[i] * (y[i] - qt) + q1[i] - q0[i] - ate
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmleEstimate {
    pub q0_init: Vec<f64>,
    pub q1_init: Vec<f64>,
    pub g1: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    pub epsilon_hat: f64,
    pub q0_star: Vec<f64>,
    pub q1_star: Vec<f64>,
    pub ate: f64,
    pub ic: Vec<f64>,
    pub se: f64,
    /// Propensities moved by the clamp.
    pub truncated: usize,
}

impl TmleEstimate {
    pub fn mean_ic(&self) -> f64 {
        self.ic.iter().sum::<f64>() / self.ic.len() as f64
    }
}

/// Applies a fitted `ε` and computes the estimate and its influence curve.
/// Predictions are on the outcome scale the link expects.
pub fn update_and_estimate(
    q0_init: &[f64],
    q1_init: &[f64],
    g1: &[f64],
    t: &[f64],
    y: &[f64],
    epsilon: f64,
    link: Link,
) -> TmleEstimate {
    let n = t.len();
    let h = clever_covariate(t, g1);
    let upd = |q: f64, hv: f64| link.inverse(link.forward(q) + epsilon * hv);
    let q1_star: Vec<f64> = (0..n).map(|i| upd(q1_init[i], 1.0 / g1[i])).collect();
    let q0_star: Vec<f64> = (0..n).map(|i| upd(q0_init[i], -1.0 / (1.0 - g1[i]))).collect();
    let ate = (0..n).map(|i| q1_star[i] - q0_star[i]).sum::<f64>() / n as f64;
    let ic = efficient_ic(t, y, &q0_star, &q1_star, g1, ate);
    let se = ic_standard_error(&ic);
    TmleEstimate {
        q0_init: q0_init.to_vec(),
        q1_init: q1_init.to_vec(),
        g1: g1.to_vec(),
        h,
        epsilon_hat: epsilon,
        q0_star,
        q1_star,
        ate,
        ic,
        se,
        truncated: 0,
    }
}

/// `√(var(ic)/n)` with the sample variance.
pub fn ic_standard_error(ic: &[f64]) -> f64 {
    let n = ic.len() as f64;
    if ic.len() < 2 {
        return 0.0;
    }
    let m = ic.iter().sum::<f64>() / n;
    let var = ic.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Targeting step for externally supplied initial estimates. Propensities
/// are clamped; bounded outcomes are min-max scaled around the logistic
/// fluctuation and the result is mapped back to the original scale.
pub fn target(
    q0_init: &[f64],
    q1_init: &[f64],
    g1: &[f64],
    t: &[f64],
    y: &[f64],
    kind: OutcomeKind,
) -> Result<TmleEstimate, TmleError> {
    let n = t.len();
    if [q0_init.len(), q1_init.len(), g1.len(), y.len()].iter().any(|&l| l != n) || n == 0 {
        return Err(TmleError::Input("target inputs differ in length".into()));
    }
    let mut g = g1.to_vec();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(TmleError::Input("propensity is not finite".into()));
    }
    let truncated = clamp_propensity(&mut g);
    let link = kind.link();
    let scaler = match kind {
        OutcomeKind::BoundedContinuous => Some(MinMax::fit(y)?),
        _ => None,
    };
    let sc = |v: &[f64]| -> Vec<f64> {
        match &scaler {
            Some(s) => v.iter().map(|&x| s.scale(x)).collect(),
            None => v.to_vec(),
        }
    };
    let (q0s, q1s, ys) = (sc(q0_init), sc(q1_init), sc(y));
    let h = clever_covariate(t, &g);
    let q_obs: Vec<f64> = (0..n).map(|i| if t[i] == 1.0 { q1s[i] } else { q0s[i] }).collect();
    let eps = fluctuate(&q_obs, &h, &ys, link)?;
    let mut est = update_and_estimate(&q0s, &q1s, &g, t, &ys, eps, link);
    est.truncated = truncated;
    if let Some(s) = scaler {
        let width = s.hi - s.lo;
        let unscale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = s.unscale(*x));
        unscale(&mut est.q0_init);
        unscale(&mut est.q1_init);
        unscale(&mut est.q0_star);
        unscale(&mut est.q1_star);
        est.ate *= width;
        est.ic.iter_mut().for_each(|v| *v *= width);
        est.se *= width;
    }
    Ok(est)
}

/// Full pipeline: fit initial learners, target, estimate.
pub fn run(data: &CausalDataset, opts: &TmleOptions) -> Result<TmleEstimate, TmleError> {
    let (q, g) = fit_initial(data, opts)?;
    let n = data.n();
    let q1 = q.predict(&with_treatment(&data.x, &vec![1.0; n]))?;
    let q0 = q.predict(&with_treatment(&data.x, &vec![0.0; n]))?;
    let g1 = g.predict(&data.x)?;
    let unscale = |v: Vec<f64>| -> Result<Vec<f64>, TmleError> {
        Ok(match opts.outcome_kind {
            OutcomeKind::BoundedContinuous => {
                let mm = MinMax::fit(&data.y)?;
                v.into_iter().map(|x| mm.unscale(x)).collect()
            }
            _ => v,
        })
    };
    target(&unscale(q0)?, &unscale(q1)?, &g1, &data.t, &data.y, opts.outcome_kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_linear;

    #[test]
    fn clever_covariate_examples() {
        assert_eq!(clever_covariate(&[1.0], &[0.25]), vec![4.0]);
        assert!((clever_covariate(&[0.0], &[0.25])[0] + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(clever_covariate(&[1.0], &[0.5]), vec![2.0]);
    }

    #[test]
    fn identity_fluctuation_closed_form() {
        let q = [0.1, 0.5, -0.2, 0.3];
        let h = [2.0, -1.5, 1.2, -3.0];
        let y = [0.4, 0.1, 0.0, 0.9];
        let e = fluctuate(&q, &h, &y, Link::Identity).unwrap();
        let num: f64 = (0..4).map(|i| h[i] * (y[i] - q[i])).sum();
        let den: f64 = h.iter().map(|v| v * v).sum();
        assert!((e - num / den).abs() < 1e-15);
    }

    #[test]
    fn calibrated_start_gives_zero_epsilon() {
        // within each H stratum the mean of y equals Q̂⁰
        let q = [0.3, 0.3, 0.6, 0.6];
        let h = [2.0, 2.0, -1.5, -1.5];
        let y = [0.0, 0.6, 1.0, 0.2];
        let e = fluctuate(&q, &h, &y, Link::Logistic).unwrap();
        assert!(e.abs() < 1e-9, "{e}");
    }

    #[test]
    fn non_finite_h_rejected() {
        let r = fluctuate(&[0.5], &[f64::INFINITY], &[1.0], Link::Logistic);
        assert!(matches!(r, Err(TmleError::Input(_))));
    }

    #[test]
    fn null_fluctuation_keeps_initial() {
        let est = update_and_estimate(&[0.2, 0.4], &[0.5, 0.9], &[0.3, 0.6], &[1.0, 0.0], &[1.0, 0.0], 0.0, Link::Logistic);
        for (a, b) in est.q1_star.iter().zip(&est.q1_init) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in est.q0_star.iter().zip(&est.q0_init) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_treatment_is_degenerate() {
        let mut ds = generate_linear(50, 1);
        ds.t.iter_mut().for_each(|v| *v = 1.0);
        assert!(matches!(fit_initial(&ds, &TmleOptions::default()), Err(TmleError::Degenerate(_))));
    }

    #[test]
    fn separable_propensity_saturates_at_clamp() {
        let mut g = vec![1e-9, 0.5, 1.0 - 1e-12];
        assert_eq!(clamp_propensity(&mut g), 2);
        assert_eq!(g, vec![0.01, 0.5, 0.99]);
    }

    #[test]
    fn constant_outcome_regression() {
        let ds = generate_linear(400, 3);
        let y = vec![2.5; 400];
        let m = LinearModel::fit(&ds.x, &y, Link::Identity, &FitOptions::default()).unwrap();
        for p in m.predict(&ds.x) {
            assert!((p - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_ic_vanishes_after_logistic_update() {
        let mut ds = generate_linear(500, 8);
        // binary outcome: y > mean
        let mean = ds.y.iter().sum::<f64>() / ds.n() as f64;
        ds.y.iter_mut().for_each(|v| *v = if *v > mean { 1.0 } else { 0.0 });
        let opts = TmleOptions {
            outcome_kind: OutcomeKind::Binary,
            ..Default::default()
        };
        let est = run(&ds, &opts).unwrap();
        assert!(est.mean_ic().abs() <= 1e-6, "{}", est.mean_ic());
    }
}
