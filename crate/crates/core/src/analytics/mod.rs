//! Win-rate and KL analytics: continuous closed forms, exact discrete values,
//! the bounds relating them, and the optimal-policy frontier.

pub mod closed;
pub mod curve;
pub mod discrete;
pub mod solve;

pub use closed::{closed_kl, closed_win_rate, exponential_kl, exponential_win_rate};
pub use curve::{matched_pair, optimal_point, winrate_kl_curve, CurvePoint, MatchedPair};
pub use discrete::{
    area_diff, discrete_kl, discrete_win_rate, eval_policy, kl_report, tilt_win_rate_report, KlReport,
    PolicyMetrics, WinRateReport, BOUND_SLACK,
};
pub use solve::{solve_c_for_kl, SolveError, KL_TOLERANCE};
