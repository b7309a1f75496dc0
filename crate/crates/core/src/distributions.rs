//! Diagonal Gaussian and Bernoulli building blocks recorded on a [`Tape`].
//!
//! Networks emit log-variances; [`DiagGaussian::from_log_var`] exponentiates
//! and floors the variance at [`VARIANCE_FLOOR`]. Probabilities are clamped to
//! `[PROB_CLAMP, 1 - PROB_CLAMP]` wherever they enter a likelihood.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffcore::{DiffError, Scalar, Tape, Tensor, Var};

pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const PROB_CLAMP: f64 = 1e-6;

/// `ln(2π)`
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Per-row diagonal Gaussian `N(mu, diag(sigma2))`; both are `[batch×D]`.
#[derive(Clone, Copy, Debug)]
pub struct DiagGaussian {
    pub mu: Var,
    pub sigma2: Var,
}

impl DiagGaussian {
    pub fn new<T: Scalar>(tape: &Tape<T>, mu: Var, sigma2: Var) -> Result<Self, DiffError> {
        if tape.value(mu).shape() != tape.value(sigma2).shape() {
            return Err(DiffError::Dimension(format!(
                "mu {:?} vs sigma2 {:?}",
                tape.value(mu).shape(),
                tape.value(sigma2).shape()
            )));
        }
        if tape.value(sigma2).data().iter().any(|&v| !(v > T::zero())) {
            return Err(DiffError::Domain("variance must be strictly positive".into()));
        }
        Ok(Self { mu, sigma2 })
    }

    /// Builds the distribution from an unconstrained log-variance.
    pub fn from_log_var<T: Scalar>(tape: &mut Tape<T>, mu: Var, log_var: Var) -> Result<Self, DiffError> {
        let s2 = tape.exp(log_var)?;
        let s2 = tape.clamp(s2, T::lit(VARIANCE_FLOOR), T::infinity());
        Self::new(tape, mu, s2)
    }

    pub fn dim<T: Scalar>(&self, tape: &Tape<T>) -> usize {
        tape.value(self.mu).cols()
    }
}

/// `KL(q ‖ N(0, I))` per row: `Σ_d ½(σ² + μ² − 1 − ln σ²)`, shape `[batch]`.
pub fn kl_to_standard_normal<T: Scalar>(tape: &mut Tape<T>, q: &DiagGaussian) -> Result<Var, DiffError> {
    let s2 = tape.value(q.sigma2);
    if s2.data().iter().any(|&v| !(v > T::zero())) {
        return Err(DiffError::Domain("variance must be strictly positive".into()));
    }
    let mu2 = tape.square(q.mu)?;
    let ln_s2 = tape.log(q.sigma2)?;
    let a = tape.add(q.sigma2, mu2)?;
    let b = tape.sub(a, ln_s2)?;
    let one = tape.scalar(T::one());
    let c = tape.sub(b, one)?;
    let per_dim = tape.scale(c, T::lit(0.5))?;
    reduce_features(tape, per_dim)
}

/// Pathwise sample `z = μ + √σ² · noise`; gradients reach both `μ` and `σ²`.
pub fn reparam_sample<T: Scalar>(tape: &mut Tape<T>, q: &DiagGaussian, noise: &Tensor<T>) -> Result<Var, DiffError> {
    if noise.shape() != tape.value(q.mu).shape() {
        return Err(DiffError::Dimension(format!(
            "noise {:?} vs mu {:?}",
            noise.shape(),
            tape.value(q.mu).shape()
        )));
    }
    let s2 = tape.clamp(q.sigma2, T::lit(VARIANCE_FLOOR), T::infinity());
    let sd = tape.sqrt(s2)?;
    let eps = tape.constant(noise.clone());
    let scaled = tape.mul(sd, eps)?;
    tape.add(q.mu, scaled)
}

/// Gaussian log-density summed over the feature axis. `sigma2` may be a
/// scalar (shared variance) or match `x`.
pub fn gaussian_log_prob<T: Scalar>(tape: &mut Tape<T>, x: Var, mu: Var, sigma2: Var) -> Result<Var, DiffError> {
    if tape.value(sigma2).data().iter().any(|&v| !(v > T::zero())) {
        return Err(DiffError::Domain("variance must be strictly positive".into()));
    }
    let diff = tape.sub(x, mu)?;
    let sq = tape.square(diff)?;
    let quad = tape.div(sq, sigma2)?;
    let ln_s2 = tape.log(sigma2)?;
    let ln_2pi = tape.scalar(T::lit(LN_2PI));
    let norm = tape.add(ln_s2, ln_2pi)?;
    // norm may be a scalar; add it to the quadratic term, which has x's shape
    let total = tape.add(quad, norm)?;
    let lp = tape.scale(total, T::lit(-0.5))?;
    reduce_features(tape, lp)
}

/// `x ln p + (1 − x) ln(1 − p)` summed over features, evaluated through the
/// logit-space kernel after clamping `p`. `x` must be binary.
pub fn bernoulli_log_prob<T: Scalar>(tape: &mut Tape<T>, x: Var, p: Var) -> Result<Var, DiffError> {
    if tape
        .value(x)
        .data()
        .iter()
        .any(|&v| v != T::zero() && v != T::one())
    {
        return Err(DiffError::Contract("bernoulli observations must be 0 or 1".into()));
    }
    if tape
        .value(p)
        .data()
        .iter()
        .any(|&v| !(v >= T::zero() && v <= T::one()))
    {
        return Err(DiffError::Domain("probability outside [0, 1]".into()));
    }
    let lo = T::lit(PROB_CLAMP);
    let pc = tape.clamp(p, lo, T::one() - lo);
    let logits = tape.logit(pc)?;
    bernoulli_log_prob_logits(tape, x, logits)
}

/// Bernoulli (or bounded-continuous cross-entropy) log-likelihood from
/// logits. Targets may lie anywhere in `[0, 1]`. Logits are clamped to the
/// range implied by the probability clamp.
pub fn bernoulli_log_prob_logits<T: Scalar>(tape: &mut Tape<T>, x: Var, logits: Var) -> Result<Var, DiffError> {
    let bound = T::lit(((1.0 - PROB_CLAMP) / PROB_CLAMP).ln());
    let lc = tape.clamp(logits, -bound, bound);
    let bce = tape.sigmoid_bce(lc, x)?;
    let lp = tape.neg(bce)?;
    reduce_features(tape, lp)
}

/// Draws a tensor of i.i.d. standard normals.
pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn reduce_features<T: Scalar>(tape: &mut Tape<T>, v: Var) -> Result<Var, DiffError> {
    if tape.value(v).shape().len() >= 2 {
        tape.sum(v, Some(1))
    } else {
        Ok(v)
    }
}
