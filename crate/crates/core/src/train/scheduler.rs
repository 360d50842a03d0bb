use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plateau decay settings; the monitored metric is the mean training loss
/// over `segment_batches` consecutive batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    pub patience: usize,
    pub factor: f64,
    pub min_delta: f64,
    pub min_lr: f64,
    pub segment_batches: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            factor: 0.1,
            min_delta: 1e-4,
            min_lr: 1e-6,
            segment_batches: 100,
        }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0)
            || self.min_delta < 0.0
            || self.min_lr < 0.0
            || self.segment_batches == 0
        {
            return Err(Error::InvalidArgument(format!(
                "invalid plateau settings {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub config: PlateauConfig,
    lr: f64,
    best: f64,
    since_improvement: usize,
    decays: usize,
}

impl PlateauScheduler {
    pub fn new(config: PlateauConfig, lr: f64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            lr,
            best: f64::INFINITY,
            since_improvement: 0,
            decays: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn decays(&self) -> usize {
        self.decays
    }

    /// Records one evaluation and returns the learning rate to use next.
    pub fn observe(&mut self, metric: f64) -> f64 {
        if metric < self.best - self.config.min_delta {
            self.best = metric;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement > self.config.patience {
                self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
                self.since_improvement = 0;
                self.decays += 1;
            }
        }
        self.lr
    }
}
