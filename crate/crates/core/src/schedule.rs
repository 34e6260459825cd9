//! Training-budget planning: the adaptive epoch rule, compute-budget
//! baselines, cosine-annealing learning-rate traces, and batch-size learning
//! rate scaling.
//!
//! A dataset of `2^k` hours trains for `m * (1 + l - k)` epochs, where `m`
//! is the base epoch count at the largest split and `l` the exponent of the
//! largest split. Smaller datasets thus receive more passes, larger ones
//! fewer, and the total compute grows sub-linearly in dataset size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base number of epochs at the largest split.
pub const DEFAULT_BASE_EPOCHS: u32 = 2;

/// Exponent of the largest dataset split (2^13 = 8192 hours).
pub const DEFAULT_MAX_EXPONENT: u32 = 13;

/// Reference learning rate and the batch size it is calibrated for.
pub const REFERENCE_LR: f64 = 0.001;
pub const REFERENCE_BATCH_SIZE: u64 = 1024;

/// Epochs for a dataset of `2^k` hours: `m * (1 + l - k)`.
pub fn epochs(k: u32, m: u32, l: u32) -> Result<u64> {
    if k > l {
        return Err(Error::InvalidExponent(format!(
            "dataset exponent k={k} exceeds the largest exponent l={l}"
        )));
    }
    if m < 1 {
        return Err(Error::InvalidInput("base epochs m must be >= 1".into()));
    }
    Ok(m as u64 * (1 + l - k) as u64)
}

/// Epochs for an arbitrary dataset size in hours, using the real-valued
/// exponent `k = log2(hours)` and rounding the epoch count up. The flag is
/// true when the size was not an exact power of two.
pub fn epochs_for_hours(hours: f64, m: u32, l: u32) -> Result<(u64, bool)> {
    if !(hours.is_finite() && hours > 0.0) {
        return Err(Error::InvalidInput(format!(
            "hours must be finite and > 0, got {hours}"
        )));
    }
    let k = hours.log2();
    if k > l as f64 {
        return Err(Error::InvalidExponent(format!(
            "dataset of {hours} h exceeds the largest split 2^{l}"
        )));
    }
    let rounded = k.fract() != 0.0;
    let raw = m as f64 * (1.0 + l as f64 - k);
    Ok((raw.ceil() as u64, rounded))
}

/// Total training samples consumed by the adaptive schedule at `2^k` hours.
pub fn compute_budget(k: u32, samples_per_hour: f64, m: u32, l: u32) -> Result<f64> {
    if !(samples_per_hour.is_finite() && samples_per_hour > 0.0) {
        return Err(Error::InvalidInput(format!(
            "samples_per_hour must be finite and > 0, got {samples_per_hour}"
        )));
    }
    Ok(2f64.powi(k as i32) * samples_per_hour * epochs(k, m, l)? as f64)
}

/// Compute budgets of the three scheduling policies at `2^k` hours, all
/// anchored to spend the same compute on the smallest split (k = 0):
/// constant-epochs doubles per step, constant-compute stays flat, and the
/// adaptive policy lies strictly between the two for `0 < k < l`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BudgetComparison {
    pub k: u32,
    pub adaptive: f64,
    pub constant_epochs: f64,
    pub constant_compute: f64,
}

pub fn budget_comparison(k: u32, samples_per_hour: f64, m: u32, l: u32) -> Result<BudgetComparison> {
    let epochs_at_zero = epochs(0, m, l)? as f64;
    let anchor = samples_per_hour * epochs_at_zero; // adaptive budget at k = 0
    Ok(BudgetComparison {
        k,
        adaptive: compute_budget(k, samples_per_hour, m, l)?,
        constant_epochs: 2f64.powi(k as i32) * samples_per_hour * epochs_at_zero,
        constant_compute: anchor,
    })
}

/// Initial learning rate scaled linearly with the effective batch size.
pub fn scale_lr(batch_size: u64) -> f64 {
    REFERENCE_LR * batch_size as f64 / REFERENCE_BATCH_SIZE as f64
}

/// A fully resolved training schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub k: u32,
    pub m: u32,
    pub l: u32,
    pub eta_max: f64,
    pub eta_min: f64,
    pub total_steps: u64,
    pub batch_size: u64,
}

impl ScheduleSpec {
    /// Builds the schedule for a `2^k`-hour dataset with `samples` training
    /// samples: epochs from the adaptive rule, steps per epoch from the
    /// batch size, and the initial learning rate from [`scale_lr`].
    pub fn new(k: u32, m: u32, l: u32, samples: u64, batch_size: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        if samples == 0 {
            return Err(Error::InvalidInput("samples must be >= 1".into()));
        }
        let steps_per_epoch = samples.div_ceil(batch_size);
        let total_steps = epochs(k, m, l)? * steps_per_epoch;
        Ok(ScheduleSpec {
            k,
            m,
            l,
            eta_max: scale_lr(batch_size),
            eta_min: 0.0,
            total_steps,
            batch_size,
        })
    }

    /// Cosine-annealed learning rate at `step in [0, total_steps]`:
    /// `eta_min + (eta_max - eta_min) * (1 + cos(pi * step / total)) / 2`.
    /// The endpoints return `eta_max` and `eta_min` exactly.
    pub fn lr_at(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::OutOfRange(format!(
                "step {step} exceeds total_steps {}",
                self.total_steps
            )));
        }
        if step == 0 {
            return Ok(self.eta_max);
        }
        if step == self.total_steps {
            return Ok(self.eta_min);
        }
        let progress = step as f64 / self.total_steps as f64;
        Ok(self.eta_min
            + 0.5 * (self.eta_max - self.eta_min) * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}
