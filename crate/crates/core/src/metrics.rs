//! Evaluation functionals: eATE, PEHE, eATT, policy risk, and aggregation
//! of per-replication results into mean ± standard error.

use serde::{Deserialize, Serialize};

use crate::diffcore::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("contract violated: {0}")]
    Contract(String),
}

fn contract<T>(msg: impl Into<String>) -> Result<T, MetricError> {
    Err(MetricError::Contract(msg.into()))
}

fn mean<T: Scalar>(v: impl Iterator<Item = T>) -> Option<T> {
    let (s, n) = v.fold((T::zero(), 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / T::from_usize(n).unwrap())
}

/// Ground truth for the effect: per unit, or a single population value.
#[derive(Clone, Copy, Debug)]
pub enum EffectTruth<'a, T> {
    PerUnit(&'a [T]),
    Scalar(T),
}

/// `|mean(τ̂) − mean(τ)|`
pub fn eate<T: Scalar>(tau_hat: &[T], truth: EffectTruth<'_, T>) -> Result<T, MetricError> {
    let Some(est) = mean(tau_hat.iter().copied()) else {
        return contract("eate of empty input");
    };
    let target = match truth {
        EffectTruth::Scalar(v) => v,
        EffectTruth::PerUnit(t) => {
            if t.len() != tau_hat.len() {
                return contract(format!("{} estimates vs {} truths", tau_hat.len(), t.len()));
            }
            mean(t.iter().copied()).unwrap()
        }
    };
    Ok((est - target).abs())
}

/// `√(mean((τ̂ − τ)²))`; heterogeneity requires per-unit truth.
pub fn pehe<T: Scalar>(tau_hat: &[T], truth: EffectTruth<'_, T>) -> Result<T, MetricError> {
    let EffectTruth::PerUnit(tau) = truth else {
        return contract("pehe needs per-unit ground truth");
    };
    if tau.len() != tau_hat.len() {
        return contract(format!("{} estimates vs {} truths", tau_hat.len(), tau.len()));
    }
    let Some(mse) = mean(tau_hat.iter().zip(tau).map(|(&a, &b)| (a - b) * (a - b))) else {
        return contract("pehe of empty input");
    };
    Ok(mse.sqrt())
}

/// Error on the average effect on the treated, measured against the
/// randomized subset: `|[ȳ(T₁) − ȳ(T₀)] − mean_{T₁}(q̂₁ − q̂₀)|`.
pub fn eatt<T: Scalar>(y: &[T], t: &[T], rct: &[bool], q1_hat: &[T], q0_hat: &[T]) -> Result<T, MetricError> {
    let n = y.len();
    if [t.len(), rct.len(), q1_hat.len(), q0_hat.len()].iter().any(|&l| l != n) {
        return contract("eatt inputs differ in length");
    }
    let treated = |i: &usize| rct[*i] && t[*i] == T::one();
    let control = |i: &usize| rct[*i] && t[*i] == T::zero();
    let (Some(y1), Some(y0)) = (
        mean((0..n).filter(treated).map(|i| y[i])),
        mean((0..n).filter(control).map(|i| y[i])),
    ) else {
        return contract("eatt needs non-empty treated and control randomized groups");
    };
    let att_hat = mean((0..n).filter(treated).map(|i| q1_hat[i] - q0_hat[i])).unwrap();
    Ok((y1 - y0 - att_hat).abs())
}

/// Policy risk of treating when `τ̂ > alpha`, estimated on the randomized
/// subset from units whose observed treatment agrees with the policy.
/// Returns `Ok(None)` when an agreement cell is empty.
pub fn policy_risk<T: Scalar>(
    y: &[T],
    t: &[T],
    rct: &[bool],
    tau_hat: &[T],
    alpha: T,
) -> Result<Option<T>, MetricError> {
    let n = y.len();
    if [t.len(), rct.len(), tau_hat.len()].iter().any(|&l| l != n) {
        return contract("policy_risk inputs differ in length");
    }
    let units: Vec<usize> = (0..n).filter(|&i| rct[i]).collect();
    if units.is_empty() {
        return contract("policy_risk needs randomized units");
    }
    let policy = |i: usize| tau_hat[i] > alpha;
    let p_treat = T::from_usize(units.iter().filter(|&&i| policy(i)).count()).unwrap()
        / T::from_usize(units.len()).unwrap();
    let y_treat = mean(units.iter().filter(|&&i| policy(i) && t[i] == T::one()).map(|&i| y[i]));
    let y_ctrl = mean(units.iter().filter(|&&i| !policy(i) && t[i] == T::zero()).map(|&i| y[i]));
    Ok(match (y_treat, y_ctrl) {
        (Some(a), Some(b)) => Some(T::one() - (a * p_treat + b * (T::one() - p_treat))),
        _ => None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    WithinSample,
    OutOfSample,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::WithinSample => "within_sample",
            Scope::OutOfSample => "out_of_sample",
        }
    }
}

/// Metrics of one replication; absent entries were not computable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub scope: Scope,
    pub eate: Option<f64>,
    pub pehe: Option<f64>,
    pub eatt: Option<f64>,
    pub policy_risk: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over `√R`; zero for a single replication.
    pub se: f64,
    pub n: usize,
}

impl Summary {
    pub fn from_values(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let r = v.len() as f64;
        let mean = v.iter().sum::<f64>() / r;
        let se = if v.len() > 1 {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
            (var / r).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se, n: v.len() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scope: Scope,
    pub n_replications: usize,
    pub eate: Option<Summary>,
    pub pehe: Option<Summary>,
    pub eatt: Option<Summary>,
    pub policy_risk: Option<Summary>,
}

/// Mean and standard error per metric across replications of one scope.
pub fn aggregate(reports: &[ReplicationMetrics]) -> Result<MetricsReport, MetricError> {
    let Some(first) = reports.first() else {
        return contract("aggregate of no replications");
    };
    if reports.iter().any(|r| r.scope != first.scope) {
        return contract("aggregate over mixed scopes");
    }
    let collect = |f: fn(&ReplicationMetrics) -> Option<f64>| {
        let v: Vec<f64> = reports.iter().filter_map(f).collect();
        Summary::from_values(&v)
    };
    Ok(MetricsReport {
        scope: first.scope,
        n_replications: reports.len(),
        eate: collect(|r| r.eate),
        pehe: collect(|r| r.pehe),
        eatt: collect(|r| r.eatt),
        policy_risk: collect(|r| r.policy_risk),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use EffectTruth::*;

    #[test]
    fn eate_examples() {
        let tau = [0.3, -0.1, 0.8];
        assert_eq!(eate(&tau, PerUnit(&tau)).unwrap(), 0.0);
        assert_eq!(eate(&[0.5, 1.5], PerUnit(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(eate(&[0.0, 0.0], Scalar(0.2)).unwrap(), 0.2);
        assert!(eate::<f64>(&[], Scalar(0.2)).is_err());
    }

    #[test]
    fn pehe_examples() {
        let tau = [0.3, -0.1, 0.8];
        assert_eq!(pehe(&tau, PerUnit(&tau)).unwrap(), 0.0);
        assert_eq!(pehe(&[0.5, 1.5], PerUnit(&[1.0, 1.0])).unwrap(), 0.5);
        assert!(pehe(&[0.5, 1.5], Scalar(1.0)).is_err());
    }

    #[test]
    fn eatt_zero_effect_predictor() {
        // treated outcomes 1.3, controls 1.0 → true ATT 0.3
        let y: [f64; 5] = [1.3, 1.3, 1.0, 1.0, 9.0];
        let t = [1.0, 1.0, 0.0, 0.0, 1.0];
        let rct = [true, true, true, true, false];
        let q = [0.4; 5];
        assert!((eatt(&y, &t, &rct, &q, &q).unwrap() - 0.3).abs() < 1e-12);
        assert!(eatt(&y, &t, &[false; 5], &q, &q).is_err());
    }

    #[test]
    fn policy_risk_extremes() {
        let t = [1.0, 0.0, 1.0, 0.0];
        let rct = [true; 4];
        let tau = [0.5, 0.5, -0.5, -0.5];
        assert_eq!(policy_risk(&[1.0; 4], &t, &rct, &tau, 0.0).unwrap(), Some(0.0));
        assert_eq!(policy_risk(&[0.0; 4], &t, &rct, &tau, 0.0).unwrap(), Some(1.0));
        // nobody treated-and-recommended
        let t0 = [0.0; 4];
        assert_eq!(policy_risk(&[1.0; 4], &t0, &rct, &tau, 0.0).unwrap(), None);
    }

    #[test]
    fn aggregate_examples() {
        let rep = |v: f64| ReplicationMetrics {
            scope: Scope::OutOfSample,
            eate: Some(v),
            pehe: Some(v),
            eatt: None,
            policy_risk: None,
        };
        let same = aggregate(&[rep(0.4), rep(0.4), rep(0.4)]).unwrap();
        assert!(same.pehe.unwrap().se < 1e-15);
        let two = aggregate(&[rep(0.1), rep(0.3)]).unwrap();
        assert!((two.eate.unwrap().mean - 0.2).abs() < 1e-15);
        assert!((two.eate.unwrap().se - 0.1).abs() < 1e-15);
        assert!(two.eatt.is_none());
        let mut other = rep(0.1);
        other.scope = Scope::WithinSample;
        assert!(aggregate(&[rep(0.1), other]).is_err());
    }
}
