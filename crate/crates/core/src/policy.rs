//! Analytically defined policies over a [`ResponseSpace`].

use crate::space::ResponseSpace;
use crate::tilt::{pow_diff, TiltError, TiltFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of a policy's total mass from 1.
pub const POLICY_SUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("n must be at least 1")]
    ZeroSamples,
    #[error(transparent)]
    Tilt(#[from] TiltError),
    #[error("policy is defined over {policy:?} (L={policy_len}) but the space is {space:?} (L={space_len})")]
    SpaceMismatch {
        policy: String,
        policy_len: usize,
        space: String,
        space_len: usize,
    },
    #[error("policy entries must be finite and non-negative (index {0})")]
    NegativeEntry(usize),
    #[error("policy mass sums to {0}")]
    NotNormalized(f64),
}

/// A normalized probability vector over one response space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePolicy {
    probs: Vec<f64>,
    space_ref: String,
}

impl DiscretePolicy {
    pub fn new(space_ref: impl Into<String>, probs: Vec<f64>) -> Result<Self, PolicyError> {
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(PolicyError::NegativeEntry(i));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > POLICY_SUM_TOLERANCE {
            return Err(PolicyError::NotNormalized(sum));
        }
        Ok(Self {
            probs,
            space_ref: space_ref.into(),
        })
    }

    /// Normalizes non-negative weights into a policy.
    pub fn from_weights(space_ref: impl Into<String>, weights: &[f64]) -> Result<Self, PolicyError> {
        if let Some(i) = weights.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(PolicyError::NegativeEntry(i));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(PolicyError::NotNormalized(sum));
        }
        Self::new(space_ref, weights.iter().map(|w| w / sum).collect())
    }

    pub fn reference(space: &ResponseSpace) -> Self {
        Self {
            probs: space.probs().to_vec(),
            space_ref: space.prompt_id().to_string(),
        }
    }

    /// All mass on the highest-reward response.
    pub fn point_mass_on_best(space: &ResponseSpace) -> Self {
        let mut probs = vec![0.0; space.len()];
        probs[space.len() - 1] = 1.0;
        Self {
            probs,
            space_ref: space.prompt_id().to_string(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn space_ref(&self) -> &str {
        &self.space_ref
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn check_space(&self, space: &ResponseSpace) -> Result<(), PolicyError> {
        if self.space_ref != space.prompt_id() || self.probs.len() != space.len() {
            return Err(PolicyError::SpaceMismatch {
                policy: self.space_ref.clone(),
                policy_len: self.probs.len(),
                space: space.prompt_id().to_string(),
                space_len: space.len(),
            });
        }
        Ok(())
    }

    /// Cumulative mass, last entry pinned to 1.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    }

    pub fn total_variation(&self, other: &DiscretePolicy) -> f64 {
        total_variation(&self.probs, &other.probs)
    }
}

/// Half the L1 distance.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "total variation of different-length vectors");
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Discrete f-tilt: entry `i` is `(F(p_{1:i}) - F(p_{1:i-1})) / (F(1) - F(0))`.
pub fn tilted_policy(space: &ResponseSpace, tilt: TiltFunction) -> Result<DiscretePolicy, PolicyError> {
    tilt.validate()?;
    let prefix = space.prefix();
    let probs = space
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| tilt.interval_mass(prefix.below(i), prefix.upto(i), p))
        .collect();
    DiscretePolicy::new(space.prompt_id(), probs)
}

/// Exact best-of-n PMF: `(p_{1:i})^n - (p_{1:i-1})^n`.
pub fn bon_policy_exact(space: &ResponseSpace, n: u32) -> Result<DiscretePolicy, PolicyError> {
    if n == 0 {
        return Err(PolicyError::ZeroSamples);
    }
    tilted_policy(space, TiltFunction::Power { n })
}

/// Exact worst-of-n PMF: `(1 - p_{1:i-1})^n - (1 - p_{1:i})^n`.
///
/// Computed as best-of-n on the reward-reversed space, read back in reverse,
/// so the upper tail masses are accumulated directly instead of as `1 - p_{1:i}`.
pub fn worst_of_n_policy_exact(space: &ResponseSpace, n: u32) -> Result<DiscretePolicy, PolicyError> {
    let reversed = bon_policy_exact(&space.reward_reversed(), n)?;
    let mut probs = reversed.probs;
    probs.reverse();
    Ok(DiscretePolicy {
        probs,
        space_ref: space.prompt_id().to_string(),
    })
}

/// One atom of the joint law of `(worst, best)` among n reference draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMass {
    pub worst: usize,
    pub best: usize,
    pub prob: f64,
}

/// Joint law of `(worst index, best index)` of n i.i.d. reference draws.
///
/// For `i < j`, inclusion-exclusion over draws confined to `[i, j]`:
/// `M(i..j)^n - M(i+1..j)^n - M(i..j-1)^n + M(i+1..j-1)^n`. The diagonal is `p_i^n`.
/// Only atoms with positive mass are returned. O(L^2); meant for small L.
pub fn best_worst_joint(space: &ResponseSpace, n: u32) -> Result<Vec<PairMass>, PolicyError> {
    if n == 0 {
        return Err(PolicyError::ZeroSamples);
    }
    let mut out = Vec::new();
    for_each_joint_row(space, n, |worst, row| {
        out.extend(
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(k, &prob)| PairMass {
                    worst,
                    best: worst + k,
                    prob,
                }),
        );
    });
    Ok(out)
}

/// Row `i` of the joint law: masses of `(worst = i, best = j)` for `j = i..L`.
pub fn joint_row(probs: &[f64], worst: usize, n: u32) -> Vec<f64> {
    let len = probs.len();
    let mut row = Vec::with_capacity(len - worst);
    let p_i = probs[worst];
    // m_full = M(i..j), m_inner = M(i+1..j), both for the current j.
    let mut m_full_prev = 0.0; // M(i..j-1)
    let mut m_inner_prev = 0.0; // M(i+1..j-1)
    for (j, &p_j) in probs.iter().enumerate().skip(worst) {
        if j == worst {
            row.push(p_i.powi(n as i32));
            m_full_prev = p_i;
            m_inner_prev = 0.0;
            continue;
        }
        let m_full = m_full_prev + p_j;
        let m_inner = m_inner_prev + p_j;
        let with_i = pow_diff(m_full, m_full_prev, p_j, n);
        let without_i = pow_diff(m_inner, m_inner_prev, p_j, n);
        row.push((with_i - without_i).max(0.0));
        m_full_prev = m_full;
        m_inner_prev = m_inner;
    }
    row
}

/// Streams the joint law row by row in worst-index order.
pub fn for_each_joint_row<F: FnMut(usize, &[f64])>(space: &ResponseSpace, n: u32, mut visit: F) {
    let probs = space.probs();
    for i in 0..probs.len() {
        let row = joint_row(probs, i, n);
        visit(i, &row);
    }
}

/// Parallel fold over the joint law; per-row partials are combined in index order.
pub fn fold_joint<F>(space: &ResponseSpace, n: u32, per_row: F) -> f64
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    let probs = space.probs();
    let partials: Vec<f64> = (0..probs.len())
        .into_par_iter()
        .map(|i| per_row(i, &joint_row(probs, i, n)))
        .collect();
    partials.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn bon_examples() {
        let u2 = ResponseSpace::uniform("u", 2).unwrap();
        assert!(close(bon_policy_exact(&u2, 1).unwrap().probs(), &[0.5, 0.5], 1e-15));
        // 4 ordered draws: only (lo, lo) keeps the low response.
        assert!(close(bon_policy_exact(&u2, 2).unwrap().probs(), &[0.25, 0.75], 1e-15));
        let s = ResponseSpace::from_probs("s", vec![0.2, 0.3, 0.5]).unwrap();
        assert!(close(bon_policy_exact(&s, 2).unwrap().probs(), &[0.04, 0.21, 0.75], 1e-15));
        assert_eq!(bon_policy_exact(&s, 0), Err(PolicyError::ZeroSamples));
    }

    #[test]
    fn worst_examples() {
        let u2 = ResponseSpace::uniform("u", 2).unwrap();
        assert!(close(worst_of_n_policy_exact(&u2, 2).unwrap().probs(), &[0.75, 0.25], 1e-15));
        let s = ResponseSpace::from_probs("s", vec![0.2, 0.3, 0.5]).unwrap();
        assert!(close(worst_of_n_policy_exact(&s, 1).unwrap().probs(), s.probs(), 1e-15));
        assert!(close(
            worst_of_n_policy_exact(&s, 2).unwrap().probs(),
            &[0.36, 0.39, 0.25],
            1e-15
        ));
        assert!(worst_of_n_policy_exact(&s, 0).is_err());
    }

    #[test]
    fn tilt_examples() {
        let s = ResponseSpace::from_probs("s", vec![0.1, 0.6, 0.3]).unwrap();
        let id = tilted_policy(&s, TiltFunction::Exponential { c: 0.0 }).unwrap();
        assert!(close(id.probs(), s.probs(), 1e-15));

        let u2 = ResponseSpace::uniform("u", 2).unwrap();
        let e = tilted_policy(&u2, TiltFunction::Exponential { c: 9f64.ln() }).unwrap();
        assert!(close(e.probs(), &[0.25, 0.75], 1e-14));
        let p3 = tilted_policy(&u2, TiltFunction::Power { n: 3 }).unwrap();
        assert!(close(p3.probs(), &[0.125, 0.875], 1e-15));

        assert!(tilted_policy(&u2, TiltFunction::Exponential { c: -1.0 }).is_err());
    }

    #[test]
    fn joint_law_is_consistent_with_marginals() {
        let s = ResponseSpace::from_probs("s", vec![0.1, 0.25, 0.05, 0.4, 0.2]).unwrap();
        let n = 4;
        let joint = best_worst_joint(&s, n).unwrap();
        let total: f64 = joint.iter().map(|a| a.prob).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let mut best = vec![0.0; s.len()];
        let mut worst = vec![0.0; s.len()];
        for a in &joint {
            assert!(a.worst <= a.best);
            best[a.best] += a.prob;
            worst[a.worst] += a.prob;
        }
        assert!(close(&best, bon_policy_exact(&s, n).unwrap().probs(), 1e-14));
        assert!(close(&worst, worst_of_n_policy_exact(&s, n).unwrap().probs(), 1e-14));
    }

    #[test]
    fn space_mismatch_is_detected() {
        let a = ResponseSpace::uniform("a", 3).unwrap();
        let b = ResponseSpace::uniform("b", 3).unwrap();
        let pol = DiscretePolicy::reference(&a);
        assert!(pol.check_space(&a).is_ok());
        assert!(matches!(pol.check_space(&b), Err(PolicyError::SpaceMismatch { .. })));
    }

    #[test]
    fn policy_validation() {
        assert!(DiscretePolicy::new("x", vec![0.5, 0.6]).is_err());
        assert!(DiscretePolicy::new("x", vec![1.5, -0.5]).is_err());
        let p = DiscretePolicy::from_weights("x", &[1.0, 3.0]).unwrap();
        assert_eq!(p.probs(), &[0.25, 0.75]);
    }
}
