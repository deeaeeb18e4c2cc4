use crate::policy::DiscretePolicy;
use crate::space::ResponseSpace;
use serde::{Deserialize, Serialize};

/// Free logits per prompt; the policy is their softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    prompt_ids: Vec<String>,
    logits: Vec<Vec<f64>>,
}

impl TabularPolicy {
    /// Logits `log p_i`, so the softmax reproduces the reference.
    pub fn from_reference(spaces: &[ResponseSpace]) -> Self {
        Self {
            prompt_ids: spaces.iter().map(|s| s.prompt_id().to_string()).collect(),
            logits: spaces
                .iter()
                .map(|s| s.probs().iter().map(|p| p.ln()).collect())
                .collect(),
        }
    }

    pub fn from_logits(prompt_ids: Vec<String>, logits: Vec<Vec<f64>>) -> Self {
        assert_eq!(prompt_ids.len(), logits.len());
        Self { prompt_ids, logits }
    }

    pub fn prompt_ids(&self) -> &[String] {
        &self.prompt_ids
    }

    pub fn num_prompts(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self, prompt: usize) -> &[f64] {
        &self.logits[prompt]
    }

    pub fn logits_mut(&mut self, prompt: usize) -> &mut [f64] {
        &mut self.logits[prompt]
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.logits.iter_mut().map(|r| r.as_mut_slice())
    }

    pub fn all_logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().flatten().all(|x| x.is_finite())
    }

    pub fn log_probs(&self, prompt: usize) -> Vec<f64> {
        log_softmax(&self.logits[prompt])
    }

    pub fn probs(&self, prompt: usize) -> Vec<f64> {
        self.log_probs(prompt).into_iter().map(f64::exp).collect()
    }

    /// The normalized policy of one prompt, renormalized against rounding.
    pub fn policy(&self, prompt: usize) -> DiscretePolicy {
        DiscretePolicy::from_weights(self.prompt_ids[prompt].clone(), &self.probs(prompt))
            .expect("softmax of finite logits is a valid policy")
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}
