//! Exact win rates and KL divergences on finite response spaces, and the
//! bounds tying them to the continuous closed forms.

use super::closed::{closed_kl, closed_win_rate};
use crate::policy::{tilted_policy, DiscretePolicy, PolicyError};
use crate::space::ResponseSpace;
use crate::tilt::TiltFunction;
use serde::{Deserialize, Serialize};

/// Floating-point slack allowed when checking an inequality that holds exactly.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinRateReport {
    pub with_ties: f64,
    pub without_ties: f64,
    /// Present when the policy is an f-tilt.
    pub continuous_closed_form: Option<f64>,
    /// `without_ties <= closed form <= with_ties`, when the closed form is known.
    pub sandwich_ok: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub discrete_exact: f64,
    pub continuous_closed_form: f64,
    /// `continuous - discrete`.
    pub gap: f64,
    /// `2 max f' / (F(1) - F(0)) * Area_diff`.
    pub gap_bound: f64,
    /// `2 f(1) / (F(1) - F(0)) * Area_diff`, bounding either discrete win rate's
    /// distance from the closed form.
    pub win_rate_gap_bound: f64,
}

impl KlReport {
    pub fn discrete_below_continuous(&self) -> bool {
        self.discrete_exact <= self.continuous_closed_form + BOUND_SLACK
    }

    pub fn gap_within_bound(&self) -> bool {
        self.gap >= -BOUND_SLACK && self.gap <= self.gap_bound + BOUND_SLACK
    }
}

/// `(1/2) Σ p_i²`: area between the staircase reward-quantile CDF and the uniform CDF.
pub fn area_diff(space: &ResponseSpace) -> f64 {
    0.5 * space.probs().iter().map(|p| p * p).sum::<f64>()
}

/// `Σ p_{1:i} π(i)` with ties and `Σ p_{1:i-1} π(i)` without.
pub fn discrete_win_rate(space: &ResponseSpace, policy: &DiscretePolicy) -> Result<WinRateReport, PolicyError> {
    policy.check_space(space)?;
    let prefix = space.prefix();
    let (mut with_ties, mut without_ties) = (0.0, 0.0);
    for (i, &pi) in policy.probs().iter().enumerate() {
        with_ties += prefix.upto(i) * pi;
        without_ties += prefix.below(i) * pi;
    }
    Ok(WinRateReport {
        with_ties,
        without_ties,
        continuous_closed_form: None,
        sandwich_ok: None,
    })
}

/// Win-rate report of the discrete f-tilt, including the sandwich check.
pub fn tilt_win_rate_report(space: &ResponseSpace, tilt: TiltFunction) -> Result<WinRateReport, PolicyError> {
    let policy = tilted_policy(space, tilt)?;
    let mut report = discrete_win_rate(space, &policy)?;
    let closed = closed_win_rate(tilt);
    report.continuous_closed_form = Some(closed);
    report.sandwich_ok = Some(
        report.without_ties <= closed + BOUND_SLACK && closed <= report.with_ties + BOUND_SLACK,
    );
    Ok(report)
}

/// `Σ π(i) log(π(i) / p_i)`; zero-mass entries contribute nothing.
pub fn discrete_kl(space: &ResponseSpace, policy: &DiscretePolicy) -> Result<f64, PolicyError> {
    policy.check_space(space)?;
    Ok(policy
        .probs()
        .iter()
        .zip(space.probs())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &p)| pi * (pi / p).ln())
        .sum())
}

pub fn kl_report(space: &ResponseSpace, tilt: TiltFunction) -> Result<KlReport, PolicyError> {
    let policy = tilted_policy(space, tilt)?;
    let discrete_exact = discrete_kl(space, &policy)?;
    let continuous_closed_form = closed_kl(tilt);
    let area = area_diff(space);
    Ok(KlReport {
        discrete_exact,
        continuous_closed_form,
        gap: continuous_closed_form - discrete_exact,
        gap_bound: 2.0 * tilt.normalized_max_slope() * area,
        win_rate_gap_bound: 2.0 * tilt.normalized_top_weight() * area,
    })
}

/// Plug-in evaluation of a policy against the reference of its space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub win_rate_with_ties: f64,
    pub win_rate_without_ties: f64,
    pub kl_vs_reference: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_attribute: Option<f64>,
}

pub fn eval_policy(space: &ResponseSpace, policy: &DiscretePolicy) -> Result<PolicyMetrics, PolicyError> {
    let wr = discrete_win_rate(space, policy)?;
    let kl = discrete_kl(space, policy)?;
    let mean_attribute = space
        .attribute()
        .map(|a| a.iter().zip(policy.probs()).map(|(a, p)| a * p).sum());
    Ok(PolicyMetrics {
        win_rate_with_ties: wr.with_ties,
        win_rate_without_ties: wr.without_ties,
        kl_vs_reference: kl,
        mean_attribute,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::bon_policy_exact;

    #[test]
    fn bon2_uniform2_win_rates() {
        let s = ResponseSpace::uniform("u", 2).unwrap();
        let r = tilt_win_rate_report(&s, TiltFunction::Power { n: 2 }).unwrap();
        assert!((r.with_ties - 0.875).abs() < 1e-15);
        assert!((r.without_ties - 0.375).abs() < 1e-15);
        assert_eq!(r.sandwich_ok, Some(true));
    }

    #[test]
    fn reference_self_win_rate() {
        let s = ResponseSpace::uniform("u", 2).unwrap();
        let r = discrete_win_rate(&s, &DiscretePolicy::reference(&s)).unwrap();
        assert!((r.with_ties - 0.75).abs() < 1e-15);
        assert_eq!(r.continuous_closed_form, None);
    }

    #[test]
    fn bon2_uniform2_kl() {
        let s = ResponseSpace::uniform("u", 2).unwrap();
        let r = kl_report(&s, TiltFunction::Power { n: 2 }).unwrap();
        let expected = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
        assert!((r.discrete_exact - expected).abs() < 1e-15);
        assert!((r.discrete_exact - 0.13081).abs() < 1e-5);
        assert!((r.continuous_closed_form - 0.19315).abs() < 1e-5);
        assert!(r.discrete_below_continuous() && r.gap_within_bound());
    }

    #[test]
    fn identity_tilt_has_zero_kl() {
        let s = ResponseSpace::from_probs("s", vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        for t in [TiltFunction::Power { n: 1 }, TiltFunction::Exponential { c: 0.0 }] {
            let r = kl_report(&s, t).unwrap();
            assert_eq!(r.discrete_exact, 0.0);
            assert_eq!(r.gap, 0.0);
            assert_eq!(r.gap_bound, 0.0);
        }
    }

    #[test]
    fn area_examples() {
        assert!((area_diff(&ResponseSpace::uniform("u", 4).unwrap()) - 0.125).abs() < 1e-15);
        let s = ResponseSpace::from_probs("s", vec![0.2, 0.3, 0.5]).unwrap();
        assert!((area_diff(&s) - 0.19).abs() < 1e-15);
        let s = ResponseSpace::from_probs("s", vec![0.999, 0.001]).unwrap();
        assert!((area_diff(&s) - 0.499001).abs() < 1e-12);
    }

    #[test]
    fn eval_examples() {
        let s = ResponseSpace::from_probs("s", vec![0.5, 0.5])
            .unwrap()
            .with_attribute(vec![10.0, 20.0])
            .unwrap();
        let m = eval_policy(&s, &bon_policy_exact(&s, 2).unwrap()).unwrap();
        assert!((m.mean_attribute.unwrap() - 17.5).abs() < 1e-12);

        let r = eval_policy(&s, &DiscretePolicy::reference(&s)).unwrap();
        assert_eq!(r.kl_vs_reference, 0.0);
        assert!((r.win_rate_with_ties - 0.75).abs() < 1e-15);
        assert!((r.mean_attribute.unwrap() - 15.0).abs() < 1e-12);

        let top = eval_policy(&s, &DiscretePolicy::point_mass_on_best(&s)).unwrap();
        assert_eq!(top.win_rate_with_ties, 1.0);
    }

    #[test]
    fn mismatched_space_is_rejected() {
        let a = ResponseSpace::uniform("a", 2).unwrap();
        let b = ResponseSpace::uniform("b", 2).unwrap();
        assert!(discrete_kl(&b, &DiscretePolicy::reference(&a)).is_err());
        assert!(eval_policy(&b, &DiscretePolicy::reference(&a)).is_err());
    }
}
