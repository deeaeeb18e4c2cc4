//! Inverting the exponential-tilt KL relation for its rate `c`.

use super::closed::exponential_kl;
use thiserror::Error;

/// Required accuracy of the solved KL.
pub const KL_TOLERANCE: f64 = 1e-10;

const MAX_BRACKET: f64 = 1e300;
const MAX_ITERATIONS: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("target KL {0} is not finite")]
    NonFiniteTarget(f64),
    #[error("target KL {0} is negative")]
    NegativeTarget(f64),
    #[error("no rate below {MAX_BRACKET:e} reaches KL {0}")]
    Unbracketed(f64),
    #[error("solver stalled at c={c} with |KL(c) - d| = {residual:e}")]
    NoConvergence { c: f64, residual: f64 },
}

/// The rate `c >= 0` with `KL(Exponential(c)) = d`.
///
/// Brackets the root on `[0, c_max]`, doubling `c_max` from 1, then refines
/// with secant steps that fall back to bisection whenever the bracket fails to
/// halve. Iterates until the bracket collapses to a few ulps.
pub fn solve_c_for_kl(d: f64) -> Result<f64, SolveError> {
    if !d.is_finite() {
        return Err(SolveError::NonFiniteTarget(d));
    }
    if d < 0.0 {
        return Err(SolveError::NegativeTarget(d));
    }
    if d == 0.0 {
        return Ok(0.0);
    }

    let g = |c: f64| exponential_kl(c) - d;

    let (mut lo, mut hi) = (0.0, 1.0);
    let mut g_hi = g(hi);
    while g_hi < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_BRACKET {
            return Err(SolveError::Unbracketed(d));
        }
        g_hi = g(hi);
    }
    let mut g_lo = g(lo);
    if g_hi == 0.0 {
        return Ok(hi);
    }

    let mut last_width = hi - lo;
    let mut use_bisection = false;
    for _ in 0..MAX_ITERATIONS {
        let width = hi - lo;
        if width <= 4.0 * f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
            break;
        }
        let secant = lo - g_lo * (hi - lo) / (g_hi - g_lo);
        let mid = 0.5 * (lo + hi);
        let c = if use_bisection || !(secant > lo && secant < hi) {
            mid
        } else {
            secant
        };
        let g_c = g(c);
        if g_c == 0.0 {
            return Ok(c);
        }
        if g_c < 0.0 {
            lo = c;
            g_lo = g_c;
        } else {
            hi = c;
            g_hi = g_c;
        }
        let new_width = hi - lo;
        use_bisection = new_width > 0.5 * last_width;
        last_width = new_width;
    }

    let c = if g_lo.abs() <= g_hi.abs() { lo } else { hi };
    let residual = g(c).abs();
    if residual > KL_TOLERANCE {
        return Err(SolveError::NoConvergence { c, residual });
    }
    Ok(c)
}
