use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Param;
use crate::tensor::Scalar;

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid AdamW settings {self:?}"
            )));
        }
        Ok(())
    }
}

/// Moment buffers and step count for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub lr: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    /// Zeroed moments for parameters of the given lengths.
    pub fn new(config: AdamWConfig, lr: f64, lens: &[usize]) -> Result<Self> {
        config.validate()?;
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(Self {
            config,
            lr,
            step: 0,
            m: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
            v: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
        })
    }

    pub fn for_params<'a>(
        config: AdamWConfig,
        lr: f64,
        params: impl IntoIterator<Item = &'a Param<T>>,
    ) -> Result<Self> {
        let lens: Vec<usize> = params.into_iter().map(|p| p.len()).collect();
        Self::new(config, lr, &lens)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update from the gradients accumulated in `params`.
    ///
    /// `θ ← θ − lr·wd·θ`, then `θ ← θ − lr·m̂ / (√v̂ + eps)` with
    /// bias-corrected moments.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::shape(
                "adamw step",
                format!("{} tensors", self.m.len()),
                format!("{} tensors", params.len()),
            ));
        }
        for (i, p) in params.iter().enumerate() {
            if p.len() != self.m[i].len() || p.grad.len() != p.len() {
                return Err(Error::shape(
                    "adamw step",
                    format!("tensor {i} with {} values", self.m[i].len()),
                    format!("{} values, {} grads", p.len(), p.grad.len()),
                ));
            }
        }
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let lr = self.lr;
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p
                .value
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g = g.to_f64();
                let mut theta = w.to_f64();
                theta -= lr * weight_decay * theta;
                let m1 = beta1 * m.to_f64() + (1.0 - beta1) * g;
                let v1 = beta2 * v.to_f64() + (1.0 - beta2) * g * g;
                *m = T::from_f64(m1);
                *v = T::from_f64(v1);
                theta -= lr * (m1 / bc1) / ((v1 / bc2).sqrt() + eps);
                *w = T::from_f64(theta);
            }
        }
        Ok(())
    }
}
