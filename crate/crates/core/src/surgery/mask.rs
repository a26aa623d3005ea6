//! Weight masks and the two-threshold mask function.

use crate::error::{Error, Result};
use crate::math::{abs_stats, hadamard, Matrix};

pub const DEFAULT_BAND_LO: f64 = 0.9;
pub const DEFAULT_BAND_HI: f64 = 1.1;

/// Pruning thresholds of one layer.
///
/// Entries with `|w| < a` are pruned, entries with `|w| >= b` are kept or
/// spliced back, and entries in between keep their current mask state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSpec {
    /// Multiplier on the standard deviation of `|W|`.
    pub c: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub a: f64,
    pub b: f64,
    /// Once set, `a` and `b` are fixed for the rest of the run.
    pub frozen: bool,
}

impl ThresholdSpec {
    /// Not yet computed; `a` and `b` are placeholders until frozen.
    pub fn unset(c: f64, band_lo: f64, band_hi: f64) -> Self {
        ThresholdSpec {
            c,
            band_lo,
            band_hi,
            a: 0.0,
            b: 0.0,
            frozen: false,
        }
    }

    /// Explicit, already frozen thresholds.
    pub fn fixed(a: f64, b: f64) -> Self {
        ThresholdSpec {
            c: 0.0,
            band_lo: DEFAULT_BAND_LO,
            band_hi: DEFAULT_BAND_HI,
            a,
            b,
            frozen: true,
        }
    }

    /// Width of the hysteresis band.
    pub fn margin(&self) -> f64 {
        self.b - self.a
    }
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::unset(0.0, DEFAULT_BAND_LO, DEFAULT_BAND_HI)
    }
}

/// Derives frozen thresholds from the magnitude statistics of `w`:
/// `t0 = mean|w| + c·std|w|`, `a = band_lo·t0`, `b = band_hi·t0`.
///
/// A negative `c` may push `t0` below zero; `a` is clamped to zero and `b`
/// to at least `a`.
pub fn compute_thresholds(w: &Matrix, c: f64, band_lo: f64, band_hi: f64) -> Result<ThresholdSpec> {
    if !(band_lo <= band_hi) || band_lo < 0.0 {
        return Err(Error::config(format!(
            "threshold band must satisfy 0 <= band_lo <= band_hi, got ({band_lo}, {band_hi})"
        )));
    }
    let (mean, std) = abs_stats(w)?;
    let t0 = mean + c * std;
    let a = (band_lo * t0).max(0.0);
    let b = (band_hi * t0).max(a);
    Ok(ThresholdSpec {
        c,
        band_lo,
        band_hi,
        a,
        b,
        frozen: true,
    })
}

/// The mask function for a single entry.
#[inline]
pub fn mask_value(w: f64, current: f64, a: f64, b: f64) -> f64 {
    let m = w.abs();
    if m < a {
        0.0
    } else if m < b {
        current
    } else {
        1.0
    }
}

/// A layer's connection weights together with their binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedParams {
    pub w: Matrix,
    /// Entries are exactly 0.0 or 1.0.
    pub t: Matrix,
    pub thresholds: ThresholdSpec,
}

impl MaskedParams {
    /// Wraps `w` with an all-ones mask.
    pub fn new(w: Matrix) -> Self {
        let t = Matrix::ones(w.rows(), w.cols());
        MaskedParams {
            w,
            t,
            thresholds: ThresholdSpec::default(),
        }
    }

    pub fn with_mask(w: Matrix, t: Matrix) -> Result<Self> {
        if w.shape() != t.shape() {
            return Err(Error::shape(format!(
                "mask {:?} does not match weights {:?}",
                t.shape(),
                w.shape()
            )));
        }
        if t.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Precondition(
                "mask entries must be exactly 0 or 1".to_string(),
            ));
        }
        Ok(MaskedParams {
            w,
            t,
            thresholds: ThresholdSpec::default(),
        })
    }

    /// The effective weights `W ⊙ T`.
    pub fn masked(&self) -> Matrix {
        hadamard(&self.w, &self.t).expect("weights and mask share a shape")
    }

    pub fn kept(&self) -> usize {
        self.t.as_slice().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Resets the mask to ones and clears frozen thresholds.
    pub fn reset_mask(&mut self) {
        self.t = Matrix::ones(self.w.rows(), self.w.cols());
        self.thresholds = ThresholdSpec::unset(
            self.thresholds.c,
            self.thresholds.band_lo,
            self.thresholds.band_hi,
        );
    }

    /// Computes and freezes thresholds from the current weights unless
    /// they are already frozen.
    pub fn freeze_thresholds(&mut self, c: f64, band_lo: f64, band_hi: f64) -> Result<()> {
        if !self.thresholds.frozen {
            self.thresholds = compute_thresholds(&self.w, c, band_lo, band_hi)?;
        }
        Ok(())
    }

    /// Re-evaluates every mask entry against the frozen thresholds.
    /// Weights are left untouched.
    pub fn update_mask(&mut self) -> Result<()> {
        if !self.thresholds.frozen {
            return Err(Error::State(
                "mask update requires frozen thresholds".to_string(),
            ));
        }
        let ThresholdSpec { a, b, .. } = self.thresholds;
        for (t, &w) in self.t.as_mut_slice().iter_mut().zip(self.w.as_slice()) {
            *t = mask_value(w, *t, a, b);
        }
        Ok(())
    }

    /// Plain gradient step on every weight, pruned or not. `grad` is the
    /// gradient with respect to the masked product and is applied unmasked.
    pub fn apply_update(&mut self, grad: &Matrix, beta: f64) -> Result<()> {
        if !(beta > 0.0) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {beta}"
            )));
        }
        if grad.shape() != self.w.shape() {
            return Err(Error::shape(format!(
                "gradient {:?} does not match weights {:?}",
                grad.shape(),
                self.w.shape()
            )));
        }
        for (w, &g) in self.w.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *w -= beta * g;
        }
        Ok(())
    }
}
