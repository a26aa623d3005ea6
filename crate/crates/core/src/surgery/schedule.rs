//! Learning-rate policies and the mask-update trigger probability.

use crate::error::{Error, Result};

/// Learning-rate policy `f(α, iter)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrPolicy {
    Fixed,
    /// `α · gamma^floor(iter / stepsize)`
    Step { gamma: f64, stepsize: usize },
    /// `α · (1 + gamma·iter)^(-power)`
    Inv { gamma: f64, power: f64 },
}

impl LrPolicy {
    pub fn rate(&self, base_lr: f64, iter: usize) -> f64 {
        match *self {
            LrPolicy::Fixed => base_lr,
            LrPolicy::Step { gamma, stepsize } => base_lr * gamma.powi((iter / stepsize) as i32),
            LrPolicy::Inv { gamma, power } => base_lr * (1.0 + gamma * iter as f64).powf(-power),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LrPolicy::Fixed => Ok(()),
            LrPolicy::Step { gamma, stepsize } => {
                if stepsize == 0 || !(gamma > 0.0) {
                    return Err(Error::config(format!(
                        "step policy needs stepsize >= 1 and gamma > 0, got {stepsize} and {gamma}"
                    )));
                }
                Ok(())
            }
            LrPolicy::Inv { gamma, power } => {
                if !(gamma >= 0.0) || !(power >= 0.0) {
                    return Err(Error::config(format!(
                        "inv policy needs gamma >= 0 and power >= 0, got {gamma} and {power}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Decay of the probability that a layer's mask is re-evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerSchedule {
    pub gamma: f64,
    pub power: f64,
    /// From this iteration on, masks are never updated.
    pub stop_iter: usize,
}

impl TriggerSchedule {
    pub fn new(gamma: f64, power: f64, stop_iter: usize) -> Result<Self> {
        let s = TriggerSchedule {
            gamma,
            power,
            stop_iter,
        };
        s.validate()?;
        Ok(s)
    }

    /// A schedule that never fires.
    pub fn never() -> Self {
        TriggerSchedule {
            gamma: 0.0,
            power: 0.0,
            stop_iter: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !(self.power >= 0.0) || !self.gamma.is_finite() || !self.power.is_finite() {
            return Err(Error::config(format!(
                "trigger gamma and power must be finite and >= 0, got {} and {}",
                self.gamma, self.power
            )));
        }
        Ok(())
    }

    pub fn probability(&self, iter: usize) -> f64 {
        trigger_probability(self, iter)
    }
}

/// `(1 + gamma·iter)^(-power)` before `stop_iter`, zero from then on.
pub fn trigger_probability(sched: &TriggerSchedule, iter: usize) -> f64 {
    if iter >= sched.stop_iter {
        return 0.0;
    }
    (1.0 + sched.gamma * iter as f64).powf(-sched.power)
}
