//! Per-epoch learning-rate schedule: linear ramp from `base/warmup` up to
//! the base rate over the warmup epochs, then cosine decay toward zero.

use crate::error::TrainError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
}

/// Learning rate at `epoch` (0-based). The warmup boundary epoch gets
/// exactly `base_lr`.
pub fn lr_at(epoch: usize, s: &LrSchedule) -> Result<f64, TrainError> {
    if epoch >= s.total_epochs {
        return Err(TrainError::EpochOutOfRange {
            epoch,
            total: s.total_epochs,
        });
    }
    if epoch < s.warmup_epochs {
        return Ok(s.base_lr * (epoch + 1) as f64 / s.warmup_epochs as f64);
    }
    let span = (s.total_epochs - s.warmup_epochs) as f64;
    let progress = (epoch - s.warmup_epochs) as f64 / span;
    Ok(s.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
