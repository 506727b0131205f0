use serde::{Deserialize, Serialize};

/// Linear warmup over the first iterations, then a constant rate that is
/// multiplied by `decay_factor` every `decay_period` epochs once
/// `decay_start_epoch` has passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LRSchedule {
    pub base_lr: f64,
    pub warmup_iters: u64,
    /// Last epoch (1-based) trained at the full rate: 35 for the
    /// balanced-set regime, 10 for the full-set regime.
    pub decay_start_epoch: usize,
    pub decay_period: usize,
    pub decay_factor: f64,
}

impl Default for LRSchedule {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            warmup_iters: 1000,
            decay_start_epoch: 35,
            decay_period: 5,
            decay_factor: 0.5,
        }
    }
}

impl LRSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(format!("base_lr {} must be > 0", self.base_lr));
        }
        if self.decay_period == 0 {
            return Err("decay_period must be >= 1".into());
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(format!("decay_factor {} outside (0, 1]", self.decay_factor));
        }
        Ok(())
    }

    /// Step-decay multiplier for a 1-based epoch, without warmup.
    pub fn epoch_factor(&self, epoch: usize) -> f64 {
        if epoch <= self.decay_start_epoch {
            return 1.0;
        }
        let steps = (epoch - self.decay_start_epoch).div_ceil(self.decay_period);
        self.decay_factor.powi(steps as i32)
    }

    /// Rate for the 1-based global `iteration` falling in 1-based `epoch`.
    pub fn lr(&self, iteration: u64, epoch: usize) -> f64 {
        let warm = if self.warmup_iters > 0 && iteration < self.warmup_iters {
            iteration.max(1) as f64 / self.warmup_iters as f64
        } else {
            1.0
        };
        self.base_lr * warm * self.epoch_factor(epoch)
    }

    /// First epoch whose rate is at most a quarter of the base rate.
    pub fn quarter_rate_epoch(&self, epochs: usize) -> Option<usize> {
        (1..=epochs).find(|&e| self.epoch_factor(e) <= 0.25)
    }
}
