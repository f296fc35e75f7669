//! Adam with linear warmup and linear decay.

use crate::encoder::transformer::{Params, TransformerConfig};
use crate::scalar::Scalar;
use ndarray::{Array, Dimension, Zip};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fraction of total steps spent warming up linearly from zero.
    pub warmup_frac: f64,
    pub total_steps: usize,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, warmup_frac: f64, total_steps: usize) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_frac,
            total_steps,
        }
    }

    /// Learning rate for 1-based step `t`: linear up over the warmup
    /// window, then linear down to zero at `total_steps`.
    pub fn lr_at(&self, t: usize) -> f64 {
        let total = self.total_steps.max(1);
        let warmup = ((total as f64 * self.warmup_frac).ceil() as usize).clamp(1, total);
        if t <= warmup {
            self.learning_rate * t as f64 / warmup as f64
        } else if total == warmup {
            self.learning_rate
        } else {
            self.learning_rate * (total - t) as f64 / (total - warmup) as f64
        }
    }
}

pub struct Adam<F: Scalar> {
    cfg: AdamConfig,
    m: Params<F>,
    v: Params<F>,
    t: usize,
}

struct AdamStep<F: Scalar> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    bias1: F,
    bias2: F,
}

impl<F: Scalar> crate::encoder::transformer::TensorOp<F> for AdamStep<F> {
    fn apply<D: Dimension>(
        &mut self,
        param: &mut Array<F, D>,
        grad: &Array<F, D>,
        state_m: &mut Array<F, D>,
        state_v: &mut Array<F, D>,
    ) {
        let one = F::one();
        Zip::from(param)
            .and(grad)
            .and(state_m)
            .and(state_v)
            .for_each(|p, &g, m, v| {
                *m = self.beta1 * *m + (one - self.beta1) * g;
                *v = self.beta2 * *v + (one - self.beta2) * g * g;
                let m_hat = *m / self.bias1;
                let v_hat = *v / self.bias2;
                *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            });
    }
}

impl<F: Scalar> Adam<F> {
    pub fn new(model_cfg: &TransformerConfig, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: Params::zeros(model_cfg),
            v: Params::zeros(model_cfg),
            t: 0,
        }
    }

    /// Apply one update; returns the learning rate that was used.
    pub fn step(&mut self, params: &mut Params<F>, grads: &Params<F>) -> f64 {
        self.t += 1;
        let lr = self.cfg.lr_at(self.t);
        let mut op = AdamStep {
            lr: F::from_f64_lossy(lr),
            beta1: F::from_f64_lossy(self.cfg.beta1),
            beta2: F::from_f64_lossy(self.cfg.beta2),
            eps: F::from_f64_lossy(self.cfg.eps),
            bias1: F::from_f64_lossy(1.0 - self.cfg.beta1.powi(self.t as i32)),
            bias2: F::from_f64_lossy(1.0 - self.cfg.beta2.powi(self.t as i32)),
        };
        params.for_each_with(grads, &mut self.m, &mut self.v, &mut op);
        lr
    }
}
