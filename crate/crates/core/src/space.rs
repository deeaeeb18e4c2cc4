//! Finite response spaces for a single prompt.
//!
//! A [`ResponseSpace`] is always stored in canonical order: rewards strictly
//! increasing by index. Only the ordering of rewards is ever used downstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities off by at most this much from 1 are silently renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("a response space needs at least 2 responses, got {0}")]
    TooFewResponses(usize),
    #[error("probability at index {index} is {value}; all probabilities must be positive and finite")]
    NonPositiveProbability { index: usize, value: f64 },
    #[error("reward at index {index} is not finite")]
    NonFiniteReward { index: usize },
    #[error("attribute at index {index} is not finite")]
    NonFiniteAttribute { index: usize },
    #[error(
        "duplicate reward {value} at indices {first} and {second}; rewards must be distinct \
         (perturb tied rewards slightly to break the tie)"
    )]
    DuplicateReward {
        value: f64,
        first: usize,
        second: usize,
    },
    #[error("probabilities sum to {sum}, which deviates from 1 by more than {RENORMALIZE_TOLERANCE}")]
    NotNormalized { sum: f64 },
}

/// The response universe of one prompt, sorted by reward.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSpace {
    prompt_id: String,
    probs: Vec<f64>,
    rewards: Vec<f64>,
    attribute: Option<Vec<f64>>,
    prefix: CumulativePrefix,
}

impl ResponseSpace {
    /// Validates, sorts by reward and renormalizes.
    ///
    /// `probs`, `rewards` and `attribute` are given in any order; the space
    /// permutes all three so that rewards increase with the index.
    pub fn new(
        prompt_id: impl Into<String>,
        probs: Vec<f64>,
        rewards: Vec<f64>,
        attribute: Option<Vec<f64>>,
    ) -> Result<Self, SpaceError> {
        let len = probs.len();
        if rewards.len() != len {
            return Err(SpaceError::LengthMismatch {
                what: "rewards",
                got: rewards.len(),
                expected: len,
            });
        }
        if let Some(attr) = &attribute {
            if attr.len() != len {
                return Err(SpaceError::LengthMismatch {
                    what: "attribute",
                    got: attr.len(),
                    expected: len,
                });
            }
            if let Some(index) = attr.iter().position(|a| !a.is_finite()) {
                return Err(SpaceError::NonFiniteAttribute { index });
            }
        }
        if len < 2 {
            return Err(SpaceError::TooFewResponses(len));
        }
        if let Some(index) = probs.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(SpaceError::NonPositiveProbability {
                index,
                value: probs[index],
            });
        }
        if let Some(index) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(SpaceError::NonFiniteReward { index });
        }

        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| rewards[a].total_cmp(&rewards[b]));
        for w in order.windows(2) {
            if rewards[w[0]] == rewards[w[1]] {
                let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(SpaceError::DuplicateReward {
                    value: rewards[w[0]],
                    first,
                    second,
                });
            }
        }

        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(SpaceError::NotNormalized { sum });
        }

        let probs: Vec<f64> = order.iter().map(|&i| probs[i] / sum).collect();
        let rewards: Vec<f64> = order.iter().map(|&i| rewards[i]).collect();
        let attribute = attribute.map(|a| order.iter().map(|&i| a[i]).collect());
        let prefix = CumulativePrefix::from_probs(&probs);

        Ok(Self {
            prompt_id: prompt_id.into(),
            probs,
            rewards,
            attribute,
            prefix,
        })
    }

    /// Uniform reference over `len` responses with rewards `0, 1, ..., len-1`.
    pub fn uniform(prompt_id: impl Into<String>, len: usize) -> Result<Self, SpaceError> {
        let probs = vec![1.0 / len as f64; len];
        let rewards = (0..len).map(|i| i as f64).collect();
        Self::new(prompt_id, probs, rewards, None)
    }

    /// Reference probabilities with rewards `0, 1, ..., len-1` (already canonical).
    pub fn from_probs(prompt_id: impl Into<String>, probs: Vec<f64>) -> Result<Self, SpaceError> {
        let rewards = (0..probs.len()).map(|i| i as f64).collect();
        Self::new(prompt_id, probs, rewards, None)
    }

    pub fn with_attribute(self, attribute: Vec<f64>) -> Result<Self, SpaceError> {
        // Attribute is given in canonical order here.
        if attribute.len() != self.len() {
            return Err(SpaceError::LengthMismatch {
                what: "attribute",
                got: attribute.len(),
                expected: self.len(),
            });
        }
        if let Some(index) = attribute.iter().position(|a| !a.is_finite()) {
            return Err(SpaceError::NonFiniteAttribute { index });
        }
        Ok(Self {
            attribute: Some(attribute),
            ..self
        })
    }

    /// The same responses with rewards negated, re-sorted into canonical order.
    pub fn reward_reversed(&self) -> Self {
        let mut probs = self.probs.clone();
        let mut rewards: Vec<f64> = self.rewards.iter().map(|r| -r).collect();
        let mut attribute = self.attribute.clone();
        probs.reverse();
        rewards.reverse();
        if let Some(a) = attribute.as_mut() {
            a.reverse();
        }
        let prefix = CumulativePrefix::from_probs(&probs);
        Self {
            prompt_id: self.prompt_id.clone(),
            probs,
            rewards,
            attribute,
            prefix,
        }
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn attribute(&self) -> Option<&[f64]> {
        self.attribute.as_deref()
    }

    pub fn prefix(&self) -> &CumulativePrefix {
        &self.prefix
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Serializable view in canonical order.
    pub fn to_record(&self) -> SpaceRecord {
        SpaceRecord {
            prompt_id: self.prompt_id.clone(),
            probs: self.probs.clone(),
            rewards: self.rewards.clone(),
            attribute: self.attribute.clone(),
        }
    }
}

/// On-disk shape of a response space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceRecord {
    pub prompt_id: String,
    pub probs: Vec<f64>,
    pub rewards: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<Vec<f64>>,
}

impl TryFrom<SpaceRecord> for ResponseSpace {
    type Error = SpaceError;

    fn try_from(r: SpaceRecord) -> Result<Self, Self::Error> {
        ResponseSpace::new(r.prompt_id, r.probs, r.rewards, r.attribute)
    }
}

/// Cumulative reference mass `p_{1:i}` for `i = 1..L`; `p_{1:0} = 0` is implicit.
///
/// Evaluating the prefix at a response index gives the reward CDF of the
/// reference model at that response's reward.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativePrefix {
    prefix: Vec<f64>,
}

impl CumulativePrefix {
    fn from_probs(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut prefix: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // Pin the top of the staircase to exactly 1.
        if let Some(last) = prefix.last_mut() {
            *last = 1.0;
        }
        Self { prefix }
    }

    /// `p_{1:i}` for 1-based `i`; `at(0)` is 0.
    pub fn at(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.prefix[i - 1]
        }
    }

    /// Mass strictly below 0-based response `index`, i.e. `p_{1:index}`.
    pub fn below(&self, index: usize) -> f64 {
        self.at(index)
    }

    /// Mass at or below 0-based response `index`.
    pub fn upto(&self, index: usize) -> f64 {
        self.prefix[index]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty()
    }

    /// Staircase CDF of the reference reward quantile: mass of responses with
    /// `p_{1:i} <= u`.
    pub fn staircase_cdf(&self, u: f64) -> f64 {
        // Largest i with prefix[i] <= u.
        let k = self.prefix.partition_point(|&p| p <= u);
        self.at(k)
    }

    /// First 0-based index whose cumulative mass exceeds `u`.
    pub fn inverse(&self, u: f64) -> usize {
        self.prefix
            .partition_point(|&p| p <= u)
            .min(self.prefix.len() - 1)
    }
}

/// `cumulative_prefix(space)`.
pub fn cumulative_prefix(space: &ResponseSpace) -> &CumulativePrefix {
    space.prefix()
}
