use serde::{Deserialize, Serialize};

use super::{DiffError, ParamSet, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) decay applied as `p -= lr * weight_decay * p`.
    pub weight_decay: f64,
    /// Inverse-time schedule per epoch: `lr / (1 + lr_decay * epoch)`.
    pub lr_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            lr_decay: 0.0,
        }
    }
}

/// First/second moment buffers and step counter for one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState<T = f64> {
    config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
    epoch: usize,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let m: Vec<_> = params
            .iter()
            .map(|(_, p)| Tensor::zeros(p.shape()))
            .collect();
        Self {
            config,
            v: m.clone(),
            m,
            step: 0,
            epoch: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr / (1.0 + self.config.lr_decay * self.epoch as f64)
    }

    /// One bias-corrected Adam update. Parameters are left untouched if any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Tensor<T>]) -> Result<(), DiffError> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(DiffError::Dimension(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(DiffError::Dimension(format!(
                    "gradient for {} has shape {:?}, parameter {:?}",
                    params.name(id),
                    g.shape(),
                    params.get(id).shape()
                )));
            }
            if !g.all_finite() {
                return Err(DiffError::Optimizer {
                    param: params.name(id).to_string(),
                });
            }
        }

        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let lr = T::lit(self.current_lr());
        let eps = T::lit(c.eps);
        let wd = T::lit(c.weight_decay);
        let bc1 = T::one() - T::lit(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::lit(c.beta2.powi(self.step as i32));

        for ((id, g), (m, v)) in params.ids().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let p = params.get_mut(id);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * (mhat / (vhat.sqrt() + eps) + wd * *pv);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::scalar(value));
        ps
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut ps = single(0.7);
        let mut opt = AdamState::new(AdamConfig::default(), &ps);
        for _ in 0..5 {
            opt.step(&mut ps, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(ps.iter().next().unwrap().1.data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t=1: m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps) ≈ lr
        let mut ps = single(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut opt = AdamState::new(cfg, &ps);
        opt.step(&mut ps, &[Tensor::scalar(1.0)]).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        approx::assert_abs_diff_eq!(ps.iter().next().unwrap().1.data()[0], expected, epsilon = 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_toward_zero() {
        let mut ps = single(2.0);
        let cfg = AdamConfig {
            lr: 0.01,
            weight_decay: 1e-4,
            ..AdamConfig::default()
        };
        let mut opt = AdamState::new(cfg, &ps);
        opt.step(&mut ps, &[Tensor::scalar(0.0)]).unwrap();
        let w = ps.iter().next().unwrap().1.data()[0];
        assert!(w < 2.0 && w > 0.0);
        approx::assert_abs_diff_eq!(w, 2.0 * (1.0 - 0.01 * 1e-4), epsilon = 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut ps = single(1.0);
        let mut opt = AdamState::new(AdamConfig::default(), &ps);
        let err = opt.step(&mut ps, &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(matches!(err, DiffError::Optimizer { ref param } if param == "w"));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn inverse_time_lr_schedule() {
        let ps = single(0.0);
        let cfg = AdamConfig {
            lr: 1.0,
            lr_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut opt = AdamState::<f64>::new(cfg, &ps);
        opt.set_epoch(2);
        approx::assert_abs_diff_eq!(opt.current_lr(), 0.5, epsilon = 1e-15);
    }
}
