use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Result};

/// Linear warmup to `base_lr`, then constant (or, optionally, linear decay
/// to zero at `total_steps`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    #[serde(default = "default_warmup_fraction")]
    pub warmup_fraction: f64,
    #[serde(default)]
    pub total_steps: usize,
    #[serde(default)]
    pub linear_decay: bool,
}

fn default_base_lr() -> f64 {
    2e-5
}

fn default_warmup_fraction() -> f64 {
    0.1
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            base_lr: default_base_lr(),
            warmup_fraction: default_warmup_fraction(),
            total_steps: 0,
            linear_decay: false,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(config_err!(
                "warmup_fraction must lie in (0, 1), got {}",
                self.warmup_fraction
            ));
        }
        if !(self.base_lr > 0.0) {
            return Err(config_err!("base_lr must be positive, got {}", self.base_lr));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_fraction * self.total_steps as f64).round() as usize
    }
}

/// Learning rate at `step` in `[0, total_steps]`.
pub fn lr_at_step(step: usize, schedule: &ScheduleConfig) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(contract!(
            "step {step} exceeds total_steps {}",
            schedule.total_steps
        ));
    }
    let warmup = schedule.warmup_steps();
    if step < warmup {
        return Ok(schedule.base_lr * (step as f64 / warmup as f64));
    }
    if schedule.linear_decay && schedule.total_steps > warmup {
        let remaining = (schedule.total_steps - step) as f64;
        return Ok(schedule.base_lr * remaining / (schedule.total_steps - warmup) as f64);
    }
    Ok(schedule.base_lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(total: usize) -> ScheduleConfig {
        ScheduleConfig {
            total_steps: total,
            ..Default::default()
        }
    }

    #[test]
    fn warmup_reference_points() {
        let s = sched(1000);
        assert_eq!(lr_at_step(100, &s).unwrap(), 2e-5);
        assert_eq!(lr_at_step(50, &s).unwrap(), 1e-5);
        assert_eq!(lr_at_step(0, &s).unwrap(), 0.0);
        assert_eq!(lr_at_step(1000, &s).unwrap(), 2e-5);
    }

    #[test]
    fn past_the_end_is_an_error() {
        assert!(lr_at_step(1001, &sched(1000)).is_err());
    }

    #[test]
    fn non_decreasing_without_decay() {
        let s = sched(137);
        let lrs: Vec<f64> = (0..=137).map(|t| lr_at_step(t, &s).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn optional_decay_reaches_zero() {
        let s = ScheduleConfig {
            linear_decay: true,
            ..sched(100)
        };
        assert_eq!(lr_at_step(10, &s).unwrap(), 2e-5);
        assert_eq!(lr_at_step(100, &s).unwrap(), 0.0);
        assert!(lr_at_step(55, &s).unwrap() < 2e-5);
    }

    #[test]
    fn validation() {
        assert!(sched(10).validate().is_ok());
        let bad = ScheduleConfig {
            warmup_fraction: 1.0,
            ..sched(10)
        };
        assert!(bad.validate().is_err());
        let bad = ScheduleConfig {
            base_lr: 0.0,
            ..sched(10)
        };
        assert!(bad.validate().is_err());
    }
}
