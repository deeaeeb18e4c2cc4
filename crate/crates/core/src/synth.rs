//! Seeded synthetic response spaces for experiments.
//!
//! Rewards are i.i.d. standard normals. Reference probabilities follow the
//! configured family independently of reward. The optional attribute is a
//! length-like proxy that correlates with reward rank.

use crate::sampling::Rng;
use crate::space::{ResponseSpace, SpaceError};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Smallest probability a Dirichlet draw is floored to before renormalizing.
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("need at least one prompt")]
    NoPrompts,
    #[error("responses per prompt must be at least 2, got {0}")]
    TooFewResponses(usize),
    #[error("attribute correlation must lie in [-1, 1], got {0}")]
    BadCorrelation(f64),
    #[error("distribution parameter must be positive and finite, got {0}")]
    BadParameter(f64),
    #[error("cannot parse distribution {0:?}; expected uniform, dirichlet(a) or zipf(s)")]
    Parse(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Family the reference probabilities are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbDistribution {
    Uniform,
    Dirichlet(f64),
    /// `p ∝ rank^-s` over a random permutation of the responses.
    Zipf(f64),
}

impl fmt::Display for ProbDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbDistribution::Uniform => write!(f, "uniform"),
            ProbDistribution::Dirichlet(a) => write!(f, "dirichlet({a})"),
            ProbDistribution::Zipf(s) => write!(f, "zipf({s})"),
        }
    }
}

impl FromStr for ProbDistribution {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t == "uniform" {
            return Ok(ProbDistribution::Uniform);
        }
        let parse_err = || SynthError::Parse(s.to_string());
        let (name, arg) = t
            .strip_suffix(')')
            .and_then(|b| b.split_once('('))
            .ok_or_else(parse_err)?;
        let v: f64 = arg.trim().parse().map_err(|_| parse_err())?;
        if !(v.is_finite() && v > 0.0) {
            return Err(SynthError::BadParameter(v));
        }
        match name.trim() {
            "dirichlet" => Ok(ProbDistribution::Dirichlet(v)),
            "zipf" => Ok(ProbDistribution::Zipf(v)),
            _ => Err(parse_err()),
        }
    }
}

impl Serialize for ProbDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProbDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_correlation() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub prompts: usize,
    pub responses: usize,
    pub distribution: ProbDistribution,
    #[serde(default)]
    pub seed: u64,
    /// Correlation between the attribute and the reward rank.
    #[serde(default = "default_correlation")]
    pub attribute_correlation: f64,
    #[serde(default = "default_true")]
    pub with_attribute: bool,
}

fn default_true() -> bool {
    true
}

impl SynthConfig {
    pub fn new(prompts: usize, responses: usize, distribution: ProbDistribution, seed: u64) -> Self {
        Self {
            prompts,
            responses,
            distribution,
            seed,
            attribute_correlation: default_correlation(),
            with_attribute: true,
        }
    }
}

pub fn prompt_id(k: usize) -> String {
    format!("prompt-{k:03}")
}

/// One space per prompt, each from its own derived stream.
pub fn synth_spaces(config: &SynthConfig) -> Result<Vec<ResponseSpace>, SynthError> {
    if config.prompts == 0 {
        return Err(SynthError::NoPrompts);
    }
    if config.responses < 2 {
        return Err(SynthError::TooFewResponses(config.responses));
    }
    let rho = config.attribute_correlation;
    if !(rho.is_finite() && (-1.0..=1.0).contains(&rho)) {
        return Err(SynthError::BadCorrelation(rho));
    }
    let base = Rng::new(config.seed, 0);
    (0..config.prompts)
        .map(|k| synth_space(config, &mut base.derive(k as u64), prompt_id(k)))
        .collect()
}

fn synth_space(config: &SynthConfig, rng: &mut Rng, id: String) -> Result<ResponseSpace, SynthError> {
    let len = config.responses;
    let rng = rng.as_rng_core();
    let rewards: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();

    let mut weights: Vec<f64> = match config.distribution {
        ProbDistribution::Uniform => vec![1.0; len],
        ProbDistribution::Dirichlet(a) => {
            let gamma = Gamma::new(a, 1.0).map_err(|_| SynthError::BadParameter(a))?;
            (0..len).map(|_| gamma.sample(rng)).collect()
        }
        ProbDistribution::Zipf(s) => {
            let mut w: Vec<f64> = (1..=len).map(|r| (r as f64).powf(-s)).collect();
            w.shuffle(rng);
            w
        }
    };
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w = (*w / total).max(PROB_FLOOR);
    }
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let attribute = if config.with_attribute {
        let rho = config.attribute_correlation;
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| rewards[a].total_cmp(&rewards[b]));
        let mut rank = vec![0.0; len];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as f64;
        }
        let mid = (len as f64 - 1.0) / 2.0;
        let sd = ((len * len - 1) as f64 / 12.0).sqrt();
        let noise_w = (1.0 - rho * rho).sqrt();
        Some(
            rank.iter()
                .map(|r| {
                    let eps: f64 = StandardNormal.sample(rng);
                    100.0 + 25.0 * (rho * (r - mid) / sd + noise_w * eps)
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(ResponseSpace::new(id, probs, rewards, attribute)?)
}
