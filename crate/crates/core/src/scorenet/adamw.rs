//! AdamW optimizer with decoupled weight decay.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub cfg: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &[&Tensor], cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One AdamW update:
    /// `p *= 1 - lr*wd; m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;`
    /// then `p -= lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)`.
    pub fn apply(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(
                "optimizer: parameter/gradient count mismatch".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.shape() != g.shape() {
                return Err(Error::Dimension("optimizer: tensor shape mismatch".into()));
            }
            let decay = 1.0 - c.lr * c.weight_decay;
            for (((pw, gw), mw), vw) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *pw *= decay;
                *mw = c.beta1 * *mw + (1.0 - c.beta1) * gw;
                *vw = c.beta2 * *vw + (1.0 - c.beta2) * gw * gw;
                let m_hat = *mw / bc1;
                let v_hat = *vw / bc2;
                *pw -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn zero_grads_zero_decay_leave_params_unchanged() {
        let mut p = scalar(0.7);
        let mut state = OptimizerState::new(&[&p], AdamWConfig::default());
        state.apply(&mut [&mut p], &[scalar(0.0)]).unwrap();
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn single_step_on_quadratic_matches_hand_computation() {
        // f(w) = w^2 at w=1: g = 2. Closed-form first AdamW step with
        // lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, wd=0:
        // m_hat = 2, v_hat = 4 => w1 = 1 - 1e-3 * 2/(2+1e-8)
        let mut w = scalar(1.0);
        let mut state = OptimizerState::new(&[&w], AdamWConfig::default());
        state.apply(&mut [&mut w], &[scalar(2.0)]).unwrap();
        assert_relative_eq!(w.data()[0], 0.999000000005, epsilon = 1e-15);
    }

    #[test]
    fn pure_decay_shrinks_by_expected_factor() {
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let mut p = scalar(2.0);
        let mut state = OptimizerState::new(&[&p], cfg);
        state.apply(&mut [&mut p], &[scalar(0.0)]).unwrap();
        assert_relative_eq!(p.data()[0], 2.0 * (1.0 - 1e-3 * 0.1), epsilon = 1e-15);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut w = scalar(1.0);
        let cfg = AdamWConfig {
            lr: 0.05,
            ..AdamWConfig::default()
        };
        let mut state = OptimizerState::new(&[&w], cfg);
        for _ in 0..200 {
            let g = scalar(2.0 * w.data()[0]);
            state.apply(&mut [&mut w], &[g]).unwrap();
        }
        assert!(w.data()[0].abs() < 1e-2);
    }
}
