//! Non-decreasing reweighting functions of the reference reward quantile.
//!
//! A tilt `f` on `[0, 1]` defines the aligned policy `pi(y) ∝ pi0(y) f(Q(r(y)))`.
//! The power family `f(u) = n u^(n-1)` is best-of-n; the exponential family
//! `f(u) = e^(cu)` is the win-rate-optimal policy at fixed KL.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TiltError {
    #[error("power tilt needs n >= 1")]
    ZeroPower,
    #[error("exponential tilt needs a finite c >= 0, got {0}")]
    NegativeRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TiltFunction {
    Power { n: u32 },
    Exponential { c: f64 },
}

impl TiltFunction {
    pub fn power(n: u32) -> Result<Self, TiltError> {
        let t = TiltFunction::Power { n };
        t.validate()?;
        Ok(t)
    }

    pub fn exponential(c: f64) -> Result<Self, TiltError> {
        let t = TiltFunction::Exponential { c };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TiltError> {
        match *self {
            TiltFunction::Power { n } if n == 0 => Err(TiltError::ZeroPower),
            TiltFunction::Exponential { c } if !(c.is_finite() && c >= 0.0) => {
                Err(TiltError::NegativeRate(c))
            }
            _ => Ok(()),
        }
    }

    /// True when `f` is constant, so the tilt reproduces the reference.
    pub fn is_identity(&self) -> bool {
        match *self {
            TiltFunction::Power { n } => n == 1,
            TiltFunction::Exponential { c } => c == 0.0,
        }
    }

    /// The continuous tilt parameter (n or c).
    pub fn parameter(&self) -> f64 {
        match *self {
            TiltFunction::Power { n } => n as f64,
            TiltFunction::Exponential { c } => c,
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        match *self {
            TiltFunction::Power { n } => n as f64 * u.powi(n as i32 - 1),
            TiltFunction::Exponential { c } => (c * u).exp(),
        }
    }

    /// Antiderivative of `f`.
    pub fn big_f(&self, u: f64) -> f64 {
        match *self {
            TiltFunction::Power { n } => u.powi(n as i32),
            TiltFunction::Exponential { c } if c == 0.0 => u,
            TiltFunction::Exponential { c } => (c * u).exp() / c,
        }
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        match *self {
            TiltFunction::Power { n } if n <= 1 => 0.0,
            TiltFunction::Power { n } => (n as f64) * (n as f64 - 1.0) * u.powi(n as i32 - 2),
            TiltFunction::Exponential { c } => c * (c * u).exp(),
        }
    }

    /// `F(1) - F(0)`.
    pub fn total_mass(&self) -> f64 {
        match *self {
            TiltFunction::Power { .. } => 1.0,
            TiltFunction::Exponential { c } if c == 0.0 => 1.0,
            TiltFunction::Exponential { c } => c.exp_m1() / c,
        }
    }

    /// `max f' / (F(1) - F(0))` on `[0, 1]`; `f'` is non-decreasing for both families.
    pub fn normalized_max_slope(&self) -> f64 {
        match *self {
            TiltFunction::Power { n } if n <= 1 => 0.0,
            TiltFunction::Power { n } => (n as f64) * (n as f64 - 1.0),
            TiltFunction::Exponential { c } if c == 0.0 => 0.0,
            // c^2 e^c / (e^c - 1)
            TiltFunction::Exponential { c } => c * c / (-(-c).exp_m1()),
        }
    }

    /// `f(1) / (F(1) - F(0))`.
    pub fn normalized_top_weight(&self) -> f64 {
        match *self {
            TiltFunction::Power { n } => n as f64,
            TiltFunction::Exponential { c } if c == 0.0 => 1.0,
            // c e^c / (e^c - 1)
            TiltFunction::Exponential { c } => c / (-(-c).exp_m1()),
        }
    }

    /// Normalized mass `(F(hi) - F(lo)) / (F(1) - F(0))` of the quantile
    /// interval `[lo, hi]`, where `width = hi - lo` is passed separately so
    /// the difference never has to be recovered by subtraction.
    pub fn interval_mass(&self, lo: f64, hi: f64, width: f64) -> f64 {
        match *self {
            TiltFunction::Power { n } => pow_diff(hi, lo, width, n),
            TiltFunction::Exponential { c } if c == 0.0 => width,
            TiltFunction::Exponential { c } => {
                // e^{c(lo - 1)} (e^{c w} - 1) / (1 - e^{-c})
                (c * (lo - 1.0)).exp() * (c * width).exp_m1() / (-(-c).exp_m1())
            }
        }
    }
}

impl fmt::Display for TiltFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TiltFunction::Power { n } => write!(f, "power({n})"),
            TiltFunction::Exponential { c } => write!(f, "exponential({c})"),
        }
    }
}

impl std::str::FromStr for TiltFunction {
    type Err = String;

    /// Parses `power(8)` / `exponential(1.5)` (also `pow`, `exp`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, arg) = s
            .strip_suffix(')')
            .and_then(|body| body.split_once('('))
            .ok_or_else(|| format!("expected name(value), got {s:?}"))?;
        let tilt = match name.trim() {
            "power" | "pow" | "bon" => TiltFunction::Power {
                n: arg.trim().parse().map_err(|e| format!("bad n in {s:?}: {e}"))?,
            },
            "exponential" | "exp" => TiltFunction::Exponential {
                c: arg.trim().parse().map_err(|e| format!("bad c in {s:?}: {e}"))?,
            },
            other => return Err(format!("unknown tilt family {other:?}")),
        };
        tilt.validate().map_err(|e| e.to_string())?;
        Ok(tilt)
    }
}

/// Above this relative cancellation the factored form is always used.
const CANCELLATION_THRESHOLD: f64 = 1e-8;

/// Up to this exponent the factored form is cheap enough to use unconditionally.
const FACTORED_MAX_EXPONENT: u32 = 64;

/// `a^n - b^n` for `0 <= b <= a <= 1` with `a - b = width`.
///
/// Evaluated as `(a - b) * sum_k a^k b^(n-1-k)` so nearly equal arguments
/// (large L, large n) keep full relative precision.
pub fn pow_diff(a: f64, b: f64, width: f64, n: u32) -> f64 {
    match n {
        0 => return 0.0,
        1 => return width,
        _ => {}
    }
    let an = int_pow(a, n);
    let direct = an - int_pow(b, n);
    if n > FACTORED_MAX_EXPONENT && direct > an * CANCELLATION_THRESHOLD {
        return direct;
    }
    if b == 0.0 {
        return width * int_pow(a, n - 1);
    }
    let mut term = int_pow(b, n - 1);
    if term < f64::MIN_POSITIVE {
        // b^(n-1) underflowed, so b^n is negligible next to a^n.
        return direct;
    }
    let ratio = a / b;
    let mut sum = 0.0;
    for _ in 0..n {
        sum += term;
        term *= ratio;
    }
    width * sum
}

/// `x^n` by repeated squaring.
pub fn int_pow(x: f64, n: u32) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    x.powi(n as i32)
}
