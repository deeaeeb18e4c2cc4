//! Win rate versus KL frontier of best-of-n against the optimal exponential tilt.

use super::closed::{closed_kl, closed_win_rate, exponential_win_rate};
use super::solve::{solve_c_for_kl, SolveError};
use crate::tilt::TiltFunction;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const BON_LABEL: &str = "bon";
pub const OPTIMAL_LABEL: &str = "optimal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub label: String,
    /// n for best-of-n, c for the exponential tilt.
    pub parameter: f64,
    pub kl: f64,
    pub win_rate: f64,
    /// Optimal minus best-of-n win rate at this KL, when both are evaluated.
    pub gap: Option<f64>,
}

/// Best-of-n and the optimal policy at the same KL.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub bon: CurvePoint,
    pub optimal: CurvePoint,
}

impl MatchedPair {
    pub fn gap(&self) -> f64 {
        self.optimal.win_rate - self.bon.win_rate
    }
}

pub fn matched_pair(n: u32) -> Result<MatchedPair, SolveError> {
    let bon_tilt = TiltFunction::Power { n };
    let kl = closed_kl(bon_tilt);
    let bon_wr = closed_win_rate(bon_tilt);
    let c = solve_c_for_kl(kl)?;
    let opt_wr = exponential_win_rate(c);
    let gap = opt_wr - bon_wr;
    Ok(MatchedPair {
        bon: CurvePoint {
            label: BON_LABEL.into(),
            parameter: n as f64,
            kl,
            win_rate: bon_wr,
            gap: Some(gap),
        },
        optimal: CurvePoint {
            label: OPTIMAL_LABEL.into(),
            parameter: c,
            kl,
            win_rate: opt_wr,
            gap: Some(gap),
        },
    })
}

/// Optimal-policy point at an arbitrary KL.
pub fn optimal_point(kl: f64) -> Result<CurvePoint, SolveError> {
    let c = solve_c_for_kl(kl)?;
    Ok(CurvePoint {
        label: OPTIMAL_LABEL.into(),
        parameter: c,
        kl,
        win_rate: exponential_win_rate(c),
        gap: None,
    })
}

/// One BoN point and one matched optimal point per n, followed by optimal
/// points at each extra KL in `kl_grid`.
pub fn winrate_kl_curve(n_values: &[u32], kl_grid: &[f64]) -> Result<Vec<CurvePoint>, SolveError> {
    if let Some(&bad) = kl_grid.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
        return Err(if bad.is_finite() {
            SolveError::NegativeTarget(bad)
        } else {
            SolveError::NonFiniteTarget(bad)
        });
    }
    let pairs: Vec<Result<MatchedPair, SolveError>> =
        n_values.par_iter().map(|&n| matched_pair(n.max(1))).collect();
    let mut out = Vec::with_capacity(2 * n_values.len() + kl_grid.len());
    for pair in pairs {
        let pair = pair?;
        out.push(pair.bon);
        out.push(pair.optimal);
    }
    let grid: Vec<Result<CurvePoint, SolveError>> = kl_grid.par_iter().map(|&k| optimal_point(k)).collect();
    for point in grid {
        out.push(point?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n1_is_degenerate() {
        let p = matched_pair(1).unwrap();
        assert_eq!(p.bon.kl, 0.0);
        assert_eq!(p.bon.win_rate, 0.5);
        assert_eq!(p.optimal.win_rate, 0.5);
        assert_eq!(p.gap(), 0.0);
    }

    #[test]
    fn n2_gap_under_one_point() {
        let g = matched_pair(2).unwrap().gap();
        assert!(g > 0.0 && g < 0.01, "gap = {g}");
    }

    #[test]
    fn gap_decreases_in_n() {
        let gaps: Vec<f64> = [2, 4, 8, 16].iter().map(|&n| matched_pair(n).unwrap().gap()).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn curve_shape() {
        let ns: Vec<u32> = (1..=16).collect();
        let pts = winrate_kl_curve(&ns, &[0.5]).unwrap();
        assert_eq!(pts.len(), 33);
        assert_eq!(pts[32].gap, None);
        assert!(winrate_kl_curve(&ns, &[-1.0]).is_err());
    }
}
