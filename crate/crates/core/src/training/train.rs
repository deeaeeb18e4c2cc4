use super::beta::beta_star;
use super::loss::{evaluate, LossKind, LossValue, Objective};
use super::optim::{Optimizer, OptimizerKind};
use super::records::TrainingSet;
use super::tabular::TabularPolicy;
use super::TrainError;
use crate::analytics::eval_policy;
use crate::sampling::{PreferenceDataset, Rng};
use crate::space::ResponseSpace;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ALPHA: f64 = 0.005;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_eval_every() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub n: u32,
    /// BoNBoN mixing weight; defaults to 0.005 for `bonbon`, rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Required for `dpo` and `ipo`, rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub steps: usize,
    /// Records per step; 0 means the full dataset every step.
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl TrainConfig {
    pub fn new(loss: LossKind, n: u32, steps: usize) -> Self {
        Self {
            loss,
            n,
            alpha: None,
            beta: None,
            learning_rate: DEFAULT_LEARNING_RATE,
            steps,
            batch_size: 0,
            seed: 0,
            eval_every: default_eval_every(),
            optimizer: OptimizerKind::default(),
        }
    }

    /// Checks field presence and ranges and resolves the objective.
    pub fn objective(&self) -> Result<Objective, TrainError> {
        let cfg = |msg: String| Err(TrainError::Config(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return cfg(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.eval_every == 0 {
            return cfg("eval_every must be at least 1".into());
        }
        if self.n == 0 {
            return cfg("n must be at least 1".into());
        }
        let uses_alpha = self.loss == LossKind::Bonbon;
        let uses_beta = matches!(self.loss, LossKind::Dpo | LossKind::Ipo);
        if self.alpha.is_some() && !uses_alpha {
            return cfg(format!("alpha is only meaningful for bonbon, not {}", self.loss.name()));
        }
        if self.beta.is_some() && !uses_beta {
            return cfg(format!(
                "beta is not a free parameter for {}; ipo_bon and bonbon use beta*_n",
                self.loss.name()
            ));
        }
        let beta = || -> Result<f64, TrainError> {
            match self.beta {
                Some(b) if b.is_finite() && b > 0.0 => Ok(b),
                Some(b) => Err(TrainError::Config(format!("beta must be positive, got {b}"))),
                None => Err(TrainError::Config(format!("{} requires beta", self.loss.name()))),
            }
        };
        Ok(match self.loss {
            LossKind::SftBon => Objective::Sft,
            LossKind::IpoBon => Objective::ipo_bon(beta_star(self.n)?),
            LossKind::Bonbon => {
                let alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
                if !(0.0..=1.0).contains(&alpha) {
                    return cfg(format!("alpha must lie in [0, 1], got {alpha}"));
                }
                Objective::bonbon(alpha, beta_star(self.n)?)
            }
            LossKind::Dpo => Objective::Dpo { beta: beta()? },
            LossKind::Ipo => Objective::ipo(beta()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Objective on the full training set.
    pub loss: f64,
    /// Mean over prompts of the exact with-ties win rate against the reference.
    pub win_rate: f64,
    /// Mean over prompts of the exact KL from the reference.
    pub kl: f64,
    /// Mean over prompts of the expected attribute; absent unless every space has one.
    pub mean_attribute: Option<f64>,
    /// Mean log-ratio statistic `h` over the training records.
    pub mean_h: f64,
    pub sft_term: f64,
    pub ipo_term: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// Exact plug-in metrics of `policy`, averaged over prompts.
pub fn policy_summary(policy: &TabularPolicy, spaces: &[ResponseSpace]) -> (f64, f64, Option<f64>) {
    let mut wr = 0.0;
    let mut kl = 0.0;
    let mut attr = Some(0.0);
    for (k, space) in spaces.iter().enumerate() {
        let m = eval_policy(space, &policy.policy(k)).expect("policy built over these spaces");
        wr += m.win_rate_with_ties;
        kl += m.kl_vs_reference;
        attr = match (attr, m.mean_attribute) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }
    let count = spaces.len().max(1) as f64;
    (wr / count, kl / count, attr.map(|a| a / count))
}

fn trace_row(step: usize, value: &LossValue, policy: &TabularPolicy, spaces: &[ResponseSpace]) -> TraceRow {
    let (win_rate, kl, mean_attribute) = policy_summary(policy, spaces);
    TraceRow {
        step,
        loss: value.value,
        win_rate,
        kl,
        mean_attribute,
        mean_h: value.mean_log_ratio,
        sft_term: value.sft_term,
        ipo_term: value.ipo_term,
    }
}

/// Trains a tabular policy initialized at the reference on sampled records.
pub fn train(
    config: &TrainConfig,
    spaces: &[ResponseSpace],
    dataset: &PreferenceDataset,
) -> Result<(TabularPolicy, TrainTrace), TrainError> {
    if dataset.n != config.n {
        return Err(TrainError::Config(format!(
            "dataset was generated with n={} but the config says n={}",
            dataset.n, config.n
        )));
    }
    let set = TrainingSet::from_dataset(spaces, dataset)?;
    train_on_set(config, spaces, &set)
}

/// Full-batch training on the exact record distribution.
pub fn train_exact(config: &TrainConfig, spaces: &[ResponseSpace]) -> Result<(TabularPolicy, TrainTrace), TrainError> {
    let set = TrainingSet::exact(spaces, config.n)?;
    train_on_set(config, spaces, &set)
}

pub fn train_on_set(
    config: &TrainConfig,
    spaces: &[ResponseSpace],
    set: &TrainingSet,
) -> Result<(TabularPolicy, TrainTrace), TrainError> {
    let objective = config.objective()?;
    if set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut policy = TabularPolicy::from_reference(spaces);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, policy.all_logits());
    let mut rng = Rng::new(config.seed, 0);
    let mut trace = TrainTrace::default();

    let full = evaluate(objective, &policy, set)?;
    trace.rows.push(trace_row(0, &full, &policy, spaces));

    for step in 1..=config.steps {
        let batch = if config.batch_size > 0 {
            set.minibatch(spaces, config.batch_size, &mut rng)
        } else {
            None
        };
        let value = evaluate(objective, &policy, batch.as_ref().unwrap_or(set))?;
        if !value.is_finite() {
            return Err(TrainError::Divergence {
                step,
                trace,
                policy: Box::new(policy),
            });
        }
        optimizer.step(policy.rows_mut(), &value.grad);

        if !policy.is_finite() {
            return Err(TrainError::Divergence {
                step,
                trace,
                policy: Box::new(policy),
            });
        }
        if step % config.eval_every == 0 || step == config.steps {
            let full = evaluate(objective, &policy, set)?;
            if !full.value.is_finite() {
                return Err(TrainError::Divergence {
                    step,
                    trace,
                    policy: Box::new(policy),
                });
            }
            trace.rows.push(trace_row(step, &full, &policy, spaces));
        }
    }
    Ok((policy, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::bon_policy_exact;

    fn spaces() -> Vec<ResponseSpace> {
        vec![
            ResponseSpace::from_probs("a", vec![0.3, 0.2, 0.5]).unwrap(),
            ResponseSpace::from_probs("b", vec![0.1, 0.4, 0.2, 0.3]).unwrap(),
        ]
    }

    #[test]
    fn config_field_rules() {
        let mut c = TrainConfig::new(LossKind::Dpo, 4, 10);
        assert!(c.objective().is_err());
        c.beta = Some(0.1);
        assert!(c.objective().is_ok());
        c.alpha = Some(0.5);
        assert!(c.objective().is_err());

        let mut c = TrainConfig::new(LossKind::Bonbon, 8, 10);
        assert!(matches!(c.objective().unwrap(), Objective::Bonbon { alpha, .. } if alpha == DEFAULT_ALPHA));
        c.beta = Some(0.1);
        assert!(c.objective().is_err());

        assert!(TrainConfig::new(LossKind::IpoBon, 1, 10).objective().is_err());
        let mut c = TrainConfig::new(LossKind::SftBon, 2, 10);
        c.eval_every = 0;
        assert!(c.objective().is_err());
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let sp = spaces();
        let cfg = TrainConfig::new(LossKind::SftBon, 2, 0);
        let (pol, trace) = train_exact(&cfg, &sp).unwrap();
        assert_eq!(pol, TabularPolicy::from_reference(&sp));
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].step, 0);
        assert!(trace.rows[0].kl.abs() < 1e-14);
    }

    #[test]
    fn trace_steps_increase() {
        let sp = spaces();
        let mut cfg = TrainConfig::new(LossKind::SftBon, 3, 25);
        cfg.eval_every = 10;
        let (_, trace) = train_exact(&cfg, &sp).unwrap();
        let steps: Vec<usize> = trace.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
    }

    #[test]
    fn sft_moves_toward_bon() {
        let sp = spaces();
        let mut cfg = TrainConfig::new(LossKind::SftBon, 3, 300);
        cfg.eval_every = 300;
        let (pol, _) = train_exact(&cfg, &sp).unwrap();
        for (k, s) in sp.iter().enumerate() {
            let target = bon_policy_exact(s, 3).unwrap();
            let start = crate::policy::DiscretePolicy::reference(s).total_variation(&target);
            assert!(pol.policy(k).total_variation(&target) < 0.1 * start);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let sp = spaces();
        let mut cfg = TrainConfig::new(LossKind::Ipo, 3, 50);
        cfg.beta = Some(1e-300);
        cfg.optimizer = OptimizerKind::Sgd;
        cfg.learning_rate = 1e10;
        match train_exact(&cfg, &sp) {
            Err(TrainError::Divergence { step, trace, .. }) => {
                assert!(step >= 1);
                assert!(!trace.rows.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn dataset_n_must_match() {
        let sp = spaces();
        let ds = crate::sampling::gen_dataset(&sp, 4, 10, &Rng::new(0, 0)).unwrap();
        let cfg = TrainConfig::new(LossKind::SftBon, 8, 1);
        assert!(matches!(train(&cfg, &sp, &ds), Err(TrainError::Config(_))));
    }
}
