//! AdamW with decoupled weight decay. Moments are keyed by parameter name
//! and shaped like their parameters; the step counter is shared.

use crate::error::TrainError;
use crate::tensor::Tensor;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advance the shared step counter; call once per batch before the
    /// per-parameter updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Update one parameter in place. `grad` must be finite and match the
    /// parameter's length; a missing gradient counts as zero (weight decay
    /// still applies).
    pub fn update(
        &mut self,
        name: &str,
        param: &mut Tensor,
        grad: Option<&[f64]>,
        lr: f64,
    ) -> Result<(), TrainError> {
        let n = param.numel();
        if let Some(g) = grad {
            if g.len() != n {
                return Err(TrainError::InvalidConfig(format!(
                    "gradient for `{name}` has length {} but the parameter has {n}",
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteGradient { name: name.into() });
            }
        }
        let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let data = param.data_mut();
        for i in 0..n {
            let g = grad.map_or(0.0, |g| g[i]);
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * data[i]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0);
        let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        opt.begin_step();
        opt.update("p", &mut p, Some(&[0.0, 0.0, 0.0]), 0.1).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        // f(w) = w² at w = 1: g = 2. One AdamW step at lr = 0.1, wd = 0:
        //   m = 0.1·2 = 0.2,  v = 0.001·4 = 0.004
        //   m̂ = 0.2/0.1 = 2,  v̂ = 0.004/0.001 = 4
        //   w ← 1 − 0.1 · 2/(2 + 1e-8)
        let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0);
        let mut p = Tensor::scalar(1.0);
        opt.begin_step();
        opt.update("w", &mut p, Some(&[2.0]), 0.1).unwrap();
        let expect = 1.0 - 0.1 * (2.0 / (4.0f64.sqrt() + 1e-8));
        assert!((p.data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn decay_only_shrinks_multiplicatively() {
        let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.05);
        let mut p = Tensor::new(vec![2], vec![2.0, -4.0]).unwrap();
        opt.begin_step();
        opt.update("p", &mut p, Some(&[0.0, 0.0]), 0.1).unwrap();
        let factor = 1.0 - 0.1 * 0.05;
        assert!((p.data()[0] - 2.0 * factor).abs() < 1e-15);
        assert!((p.data()[1] + 4.0 * factor).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0);
        let mut p = Tensor::scalar(1.0);
        opt.begin_step();
        let err = opt.update("w", &mut p, Some(&[f64::NAN]), 0.1);
        assert!(matches!(err, Err(TrainError::NonFiniteGradient { .. })));
        assert_eq!(p.data(), &[1.0], "aborted step must not touch the param");
    }

    #[test]
    fn step_counter_is_monotone() {
        let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0);
        assert_eq!(opt.step_count(), 0);
        opt.begin_step();
        opt.begin_step();
        assert_eq!(opt.step_count(), 2);
    }
}
