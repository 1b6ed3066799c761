//! Training configuration, the cyclic learning-rate schedule and Adam.

use serde::{Deserialize, Serialize};

use super::layers::{Grads, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr_max: f64,
    pub lr_min: f64,
    pub lr_cycle_steps: u64,
    pub lambda_pixel: f64,
    pub lambda_perceptual: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr_max: 2e-4,
            lr_min: 2e-5,
            lr_cycle_steps: 2000,
            lambda_pixel: 100.0,
            lambda_perceptual: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return bad("need 0 < lr_min <= lr_max");
        }
        if !(self.lambda_pixel >= 0.0 && self.lambda_perceptual >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.lr_cycle_steps < 2 {
            return bad("lr_cycle_steps must be at least 2");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// Triangular wave: `lr_min` at multiples of the period, `lr_max` at the
/// half period.
pub fn cyclic_lr(step: u64, cfg: &TrainConfig) -> f64 {
    let period = cfg.lr_cycle_steps as f64;
    let phase = (step % cfg.lr_cycle_steps) as f64 / period;
    let tri = 1.0 - (2.0 * phase - 1.0).abs();
    // written as a blend so both endpoints are hit exactly
    (cfg.lr_min * (1.0 - tri) + cfg.lr_max * tri).clamp(cfg.lr_min, cfg.lr_max)
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: Vec<Vec<f32>> = params
            .list
            .iter()
            .map(|p| vec![0.0; p.value.len()])
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One Adam update; `t` is the 1-based step used for bias correction.
    pub fn update(
        &mut self,
        params: &mut Params,
        grads: &Grads,
        lr: f64,
        t: u64,
        cfg: &TrainConfig,
    ) {
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);
        for (pi, p) in params.list.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[pi], &mut self.v[pi], &grads.list[pi]);
            for j in 0..p.value.len() {
                let mj = b1 * m[j] as f64 + (1.0 - b1) * g[j];
                let vj = b2 * v[j] as f64 + (1.0 - b2) * g[j] * g[j];
                m[j] = mj as f32;
                v[j] = vj as f32;
                let step = lr * (mj / c1) / ((vj / c2).sqrt() + cfg.adam_eps);
                p.value[j] = (p.value[j] as f64 - step) as f32;
            }
        }
    }
}
