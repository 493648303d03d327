//! AdamW with linear warmup/decay and global-norm clipping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in parameter block '{block}'")]
    NonFiniteGradient { block: String },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_ratio: 0.06,
            max_grad_norm: Some(1.0),
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::InvalidConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be ≥ 0, got {}", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad(format!("warmup_ratio must lie in [0, 1], got {}", self.warmup_ratio));
        }
        if let Some(c) = self.max_grad_norm {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("max_grad_norm must be > 0, got {c}"));
            }
        }
        Ok(())
    }
}

/// Linear warmup followed by linear decay to zero over `total` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup: usize,
    pub total: usize,
}

impl Schedule {
    pub fn new(base_lr: f64, warmup_ratio: f64, total: usize) -> Self {
        let warmup = ((warmup_ratio * total as f64).ceil() as usize).min(total);
        Self { base_lr, warmup, total }
    }

    /// Learning rate used by update `step` (1-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup > 0 && step <= self.warmup {
            return self.base_lr * step as f64 / self.warmup as f64;
        }
        if step >= self.total || self.total == self.warmup {
            return 0.0;
        }
        self.base_lr * (self.total - step) as f64 / (self.total - self.warmup) as f64
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(blocks: &mut [(&str, &mut [f64])], max_norm: f64) -> Result<f64, OptimError> {
    let mut sq = 0.0;
    for (name, g) in blocks.iter() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient { block: name.to_string() });
        }
        sq += g.iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, g) in blocks.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(norm)
}

/// First and second moment estimates for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One named parameter block handed to [`AdamW::step`].
pub struct ParamBlock<'a> {
    pub name: &'a str,
    pub values: &'a mut [f64],
    pub grad: &'a mut [f64],
    /// Whether decoupled weight decay applies (biases are exempt).
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    cfg: AdamWConfig,
    schedule: Schedule,
    moments: Vec<Moments>,
    step: usize,
}

impl AdamW {
    /// `block_sizes` fixes the order and length of the blocks passed to `step`.
    pub fn new(cfg: AdamWConfig, total_steps: usize, block_sizes: &[usize]) -> Result<Self, OptimError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            schedule: Schedule::new(cfg.lr, cfg.warmup_ratio, total_steps),
            moments: block_sizes.iter().map(|&n| Moments::zeros(n)).collect(),
            step: 0,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Clips, then applies one update. Returns `(lr, pre-clip grad norm)`.
    pub fn step(&mut self, blocks: &mut [ParamBlock]) -> Result<(f64, f64), OptimError> {
        let norm = {
            let mut views: Vec<(&str, &mut [f64])> = blocks.iter_mut().map(|b| (b.name, &mut *b.grad)).collect();
            match self.cfg.max_grad_norm {
                Some(c) => clip_global_norm(&mut views, c)?,
                None => clip_global_norm(&mut views, f64::INFINITY)?,
            }
        };
        self.step += 1;
        let t = self.step as i32;
        let lr = self.schedule.lr_at(self.step);
        let AdamWConfig { beta1, beta2, eps, weight_decay, .. } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (block, mom) in blocks.iter_mut().zip(&mut self.moments) {
            for i in 0..block.values.len() {
                let g = block.grad[i];
                if block.decay {
                    block.values[i] -= lr * weight_decay * block.values[i];
                }
                mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
                mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                block.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok((lr, norm))
    }
}
