//! Preference losses over a [`TrainingSet`] with analytic logit gradients.
//!
//! Every loss is a weighted mean over records. With
//! `h = log(π_θ(best)/π_θ(worst)) - log(π0(best)/π0(worst))`:
//!
//! - SFT-BoN: `-log π_θ(best)`
//! - IPO with target `T`: `(h - T)^2`; IPO-BoN fixes `T = 1/(2β*_n)`
//! - BoNBoN: `α SFT-BoN + (1 - α) IPO-BoN`, sharing one batch
//! - DPO: `-log σ(β h)`

use super::beta::BetaStar;
use super::records::TrainingSet;
use super::tabular::{log_softmax, TabularPolicy};
use super::TrainError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SftBon,
    IpoBon,
    Bonbon,
    Dpo,
    Ipo,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::SftBon,
        LossKind::IpoBon,
        LossKind::Bonbon,
        LossKind::Dpo,
        LossKind::Ipo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SftBon => "sft_bon",
            LossKind::IpoBon => "ipo_bon",
            LossKind::Bonbon => "bonbon",
            LossKind::Dpo => "dpo",
            LossKind::Ipo => "ipo",
        }
    }
}

/// A loss with its hyperparameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Sft,
    /// Squared deviation of `h` from `target`.
    Ipo { target: f64 },
    Bonbon { alpha: f64, target: f64 },
    Dpo { beta: f64 },
}

impl Objective {
    pub fn ipo_bon(beta_star: BetaStar) -> Self {
        Objective::Ipo {
            target: beta_star.target(),
        }
    }

    pub fn ipo(beta: f64) -> Self {
        Objective::Ipo {
            target: 1.0 / (2.0 * beta),
        }
    }

    pub fn bonbon(alpha: f64, beta_star: BetaStar) -> Self {
        Objective::Bonbon {
            alpha,
            target: beta_star.target(),
        }
    }

    fn weights(&self) -> (f64, f64, Option<f64>) {
        // (sft weight, squared-ratio weight, target)
        match *self {
            Objective::Sft => (1.0, 0.0, None),
            Objective::Ipo { target } => (0.0, 1.0, Some(target)),
            Objective::Bonbon { alpha, target } => (alpha, 1.0 - alpha, Some(target)),
            Objective::Dpo { .. } => (0.0, 0.0, None),
        }
    }
}

/// Loss value, its gradient with respect to every logit, and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<Vec<f64>>,
    /// Mean `-log π_θ(best)`, whatever the objective.
    pub sft_term: f64,
    /// Mean `(h - T)^2` for objectives with a target, else 0.
    pub ipo_term: f64,
    /// Mean `h` over records.
    pub mean_log_ratio: f64,
}

impl LossValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().flatten().all(|g| g.is_finite())
    }
}

#[derive(Default)]
struct Partial {
    value: f64,
    sft: f64,
    ipo: f64,
    h: f64,
}

/// Evaluates `objective` on `set`. Prompts are processed in parallel and
/// their partial sums combined in prompt order.
pub fn evaluate(objective: Objective, policy: &TabularPolicy, set: &TrainingSet) -> Result<LossValue, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (sft_w, sq_w, target) = objective.weights();
    let norm = 1.0 / set.total_weight();

    let parts: Vec<(usize, Partial, Vec<f64>)> = set
        .groups()
        .par_iter()
        .map(|group| {
            let logits = policy.logits(group.prompt);
            let log_p = log_softmax(logits);
            let mut grad = vec![0.0; logits.len()];
            let mut part = Partial::default();
            let mut group_weight = 0.0;
            for pair in &group.pairs {
                let w = pair.weight;
                group_weight += w;
                let nll = -log_p[pair.best];
                let h = if pair.best == pair.worst {
                    0.0
                } else {
                    log_p[pair.best] - log_p[pair.worst] - pair.reference_log_ratio
                };
                part.sft += w * nll;
                part.h += w * h;

                // d/dθ of -log π(best) is π - e_best; the π part is added once below.
                grad[pair.best] -= w * sft_w;

                let dh = match (objective, target) {
                    (Objective::Dpo { beta }, _) => {
                        // -log σ(βh) = softplus(-βh)
                        part.value += w * softplus(-beta * h);
                        -beta * sigmoid(-beta * h)
                    }
                    (_, Some(t)) => {
                        let r = h - t;
                        part.ipo += w * r * r;
                        sq_w * 2.0 * r
                    }
                    _ => 0.0,
                };
                if pair.best != pair.worst {
                    grad[pair.best] += w * dh;
                    grad[pair.worst] -= w * dh;
                }
            }
            if sft_w != 0.0 {
                for (g, lp) in grad.iter_mut().zip(&log_p) {
                    *g += sft_w * group_weight * lp.exp();
                }
            }
            part.value += sft_w * part.sft + sq_w * part.ipo;
            for g in grad.iter_mut() {
                *g *= norm;
            }
            (group.prompt, part, grad)
        })
        .collect();

    let mut grad: Vec<Vec<f64>> = policy
        .all_logits()
        .iter()
        .map(|l| vec![0.0; l.len()])
        .collect();
    let mut total = Partial::default();
    for (prompt, part, g) in parts {
        total.value += part.value;
        total.sft += part.sft;
        total.ipo += part.ipo;
        total.h += part.h;
        for (acc, x) in grad[prompt].iter_mut().zip(g) {
            *acc += x;
        }
    }
    Ok(LossValue {
        value: total.value * norm,
        grad,
        sft_term: total.sft * norm,
        ipo_term: total.ipo * norm,
        mean_log_ratio: total.h * norm,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn loss_sft_bon(policy: &TabularPolicy, set: &TrainingSet) -> Result<LossValue, TrainError> {
    evaluate(Objective::Sft, policy, set)
}

pub fn loss_ipo_bon(policy: &TabularPolicy, set: &TrainingSet, beta_star: BetaStar) -> Result<LossValue, TrainError> {
    evaluate(Objective::ipo_bon(beta_star), policy, set)
}

pub fn loss_bonbon(
    policy: &TabularPolicy,
    set: &TrainingSet,
    alpha: f64,
    beta_star: BetaStar,
) -> Result<LossValue, TrainError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(TrainError::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    evaluate(Objective::bonbon(alpha, beta_star), policy, set)
}

pub fn loss_dpo(policy: &TabularPolicy, set: &TrainingSet, beta: f64) -> Result<LossValue, TrainError> {
    check_beta(beta)?;
    evaluate(Objective::Dpo { beta }, policy, set)
}

pub fn loss_ipo(policy: &TabularPolicy, set: &TrainingSet, beta: f64) -> Result<LossValue, TrainError> {
    check_beta(beta)?;
    evaluate(Objective::ipo(beta), policy, set)
}

fn check_beta(beta: f64) -> Result<(), TrainError> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(TrainError::Config(format!("beta must be positive, got {beta}")))
    }
}
