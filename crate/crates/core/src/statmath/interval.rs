use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An open interval on the extended real line.
///
/// Either endpoint may be infinite; both are otherwise finite and `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::invalid("interval endpoint is NaN"));
        }
        if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("interval ({lo}, {hi}) is empty")));
        }
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "interval requires lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn finite(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "expected a finite interval, got ({lo}, {hi})"
            )));
        }
        Self::new(lo, hi)
    }

    pub fn real_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn upper(lo: f64) -> Result<Self> {
        Self::new(lo, f64::INFINITY)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    /// Intersection with `other`, or `None` when it is empty.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }
}
