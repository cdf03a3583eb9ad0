//! Decoupled-weight-decay adaptive-moment optimizer with linear warmup
//! and polynomial decay to zero.

use crate::model::{ModelParams, TensorMut};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam with decoupled weight decay. Decay applies to matrices only;
/// biases, gains and embeddable vectors are exempt.
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
}

impl AdamW {
    pub fn new(params: &ModelParams<f32>) -> AdamW {
        let mut m = Vec::new();
        params.visit(|_, t| m.push(vec![0.0; t.as_slice().len()]));
        let v = m.clone();
        AdamW { m, v, t: 0 }
    }

    pub fn step(
        &mut self,
        params: &mut ModelParams<f32>,
        grads: &ModelParams<f32>,
        lr: f64,
        weight_decay: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let mut grad_slices = Vec::new();
        grads.visit(|_, t| grad_slices.push(t.as_slice().to_vec()));
        let mut idx = 0;
        params.visit_mut(|_, mut tensor| {
            let decay = match tensor {
                TensorMut::M(_) => weight_decay,
                TensorMut::V(_) => 0.0,
            };
            let slice = tensor.as_slice_mut();
            let g = &grad_slices[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..slice.len() {
                let gi = g[i] as f64;
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                let p = slice[i] as f64;
                slice[i] = (p - lr * (mhat / (vhat.sqrt() + EPS) + decay * p)) as f32;
            }
            idx += 1;
        });
    }
}

/// Linear warmup to `base_lr` then polynomial decay to zero at
/// `total_steps`.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub power: f64,
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        if self.base_lr == 0.0 {
            return 0.0;
        }
        if self.warmup_steps > 0 && step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        if self.total_steps <= self.warmup_steps {
            return self.base_lr;
        }
        let progress =
            (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        self.base_lr * (1.0 - progress.min(1.0)).powf(self.power)
    }
}
