use super::TrainError;
use crate::policy::best_worst_joint;
use crate::sampling::{PreferenceDataset, PreferenceRecord, Rng};
use crate::space::ResponseSpace;
use std::collections::{BTreeMap, HashMap};

/// A `(best, worst)` pair with its weight and frozen reference log-ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair {
    pub best: usize,
    pub worst: usize,
    pub weight: f64,
    /// `log p_best - log p_worst`.
    pub reference_log_ratio: f64,
}

/// Weighted pairs of one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPairs {
    pub prompt: usize,
    pub pairs: Vec<WeightedPair>,
}

/// Loss inputs: identical records are merged into weights, so a loss over the
/// set equals the mean over the original records.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    groups: Vec<PromptPairs>,
    total_weight: f64,
    /// Flat `(prompt, best, worst)` list for mini-batch sampling, when built
    /// from sampled records.
    records: Option<Vec<(usize, usize, usize)>>,
}

impl TrainingSet {
    /// Resolves a dataset's prompt ids against `spaces` (which fix the
    /// prompt order of the tabular policy).
    pub fn from_dataset(spaces: &[ResponseSpace], dataset: &PreferenceDataset) -> Result<Self, TrainError> {
        Self::from_records(spaces, &dataset.records)
    }

    pub fn from_records(spaces: &[ResponseSpace], records: &[PreferenceRecord]) -> Result<Self, TrainError> {
        let index: HashMap<&str, usize> = spaces
            .iter()
            .enumerate()
            .map(|(k, s)| (s.prompt_id(), k))
            .collect();
        let mut flat = Vec::with_capacity(records.len());
        for r in records {
            let &k = index
                .get(r.prompt_id.as_str())
                .ok_or_else(|| TrainError::UnknownPrompt(r.prompt_id.clone()))?;
            let len = spaces[k].len();
            if r.best_index >= len || r.worst_index >= len || r.best_index < r.worst_index {
                return Err(TrainError::InvalidRecord(format!(
                    "{}: best={} worst={} (L={len})",
                    r.prompt_id, r.best_index, r.worst_index
                )));
            }
            flat.push((k, r.best_index, r.worst_index));
        }
        let mut set = Self::aggregate(spaces, &flat);
        set.records = Some(flat);
        Ok(set)
    }

    /// Merges `(prompt, best, worst)` triples into unit-weight counts.
    pub fn aggregate(spaces: &[ResponseSpace], flat: &[(usize, usize, usize)]) -> Self {
        let mut counts: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for &key in flat {
            *counts.entry(key).or_insert(0.0) += 1.0;
        }
        let mut groups: Vec<PromptPairs> = Vec::new();
        for ((k, best, worst), weight) in counts {
            if groups.last().map(|g| g.prompt) != Some(k) {
                groups.push(PromptPairs {
                    prompt: k,
                    pairs: Vec::new(),
                });
            }
            let probs = spaces[k].probs();
            groups.last_mut().unwrap().pairs.push(WeightedPair {
                best,
                worst,
                weight,
                reference_log_ratio: probs[best].ln() - probs[worst].ln(),
            });
        }
        Self {
            total_weight: flat.len() as f64,
            groups,
            records: None,
        }
    }

    /// The infinite-data limit: every `(best, worst)` pair of an n-sample,
    /// weighted by its exact probability. Each prompt carries total weight 1.
    pub fn exact(spaces: &[ResponseSpace], n: u32) -> Result<Self, TrainError> {
        let mut groups = Vec::with_capacity(spaces.len());
        for (k, space) in spaces.iter().enumerate() {
            let probs = space.probs();
            let pairs = best_worst_joint(space, n)
                .map_err(|e| TrainError::InvalidRecord(e.to_string()))?
                .into_iter()
                .map(|a| WeightedPair {
                    best: a.best,
                    worst: a.worst,
                    weight: a.prob,
                    reference_log_ratio: probs[a.best].ln() - probs[a.worst].ln(),
                })
                .collect();
            groups.push(PromptPairs { prompt: k, pairs });
        }
        let total_weight = groups
            .iter()
            .flat_map(|g| g.pairs.iter().map(|p| p.weight))
            .sum();
        Ok(Self {
            groups,
            total_weight,
            records: None,
        })
    }

    /// Uniform-with-replacement mini-batch of sampled records.
    pub fn minibatch(&self, spaces: &[ResponseSpace], size: usize, rng: &mut Rng) -> Option<Self> {
        let records = self.records.as_ref()?;
        if records.is_empty() {
            return None;
        }
        let picked: Vec<(usize, usize, usize)> = (0..size)
            .map(|_| records[rng.below(records.len() as u64) as usize])
            .collect();
        Some(Self::aggregate(spaces, &picked))
    }

    pub fn groups(&self) -> &[PromptPairs] {
        &self.groups
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn is_empty(&self) -> bool {
        !(self.total_weight > 0.0)
    }

    pub fn num_records(&self) -> Option<usize> {
        self.records.as_ref().map(Vec::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(p: &str, best: usize, worst: usize) -> PreferenceRecord {
        PreferenceRecord {
            prompt_id: p.into(),
            best_index: best,
            worst_index: worst,
            n: 2,
        }
    }

    #[test]
    fn aggregates_duplicates() {
        let spaces = vec![ResponseSpace::uniform("a", 3).unwrap(), ResponseSpace::uniform("b", 3).unwrap()];
        let set = TrainingSet::from_records(
            &spaces,
            &[rec("b", 2, 0), rec("a", 1, 0), rec("a", 1, 0), rec("b", 2, 2)],
        )
        .unwrap();
        assert_eq!(set.total_weight(), 4.0);
        assert_eq!(set.groups().len(), 2);
        assert_eq!(set.groups()[0].prompt, 0);
        assert_eq!(set.groups()[0].pairs[0].weight, 2.0);
        assert_eq!(set.groups()[1].pairs.len(), 2);
    }

    #[test]
    fn rejects_unknown_prompt_and_bad_indices() {
        let spaces = vec![ResponseSpace::uniform("a", 3).unwrap()];
        assert!(matches!(
            TrainingSet::from_records(&spaces, &[rec("zzz", 1, 0)]),
            Err(TrainError::UnknownPrompt(_))
        ));
        assert!(matches!(
            TrainingSet::from_records(&spaces, &[rec("a", 3, 0)]),
            Err(TrainError::InvalidRecord(_))
        ));
        assert!(matches!(
            TrainingSet::from_records(&spaces, &[rec("a", 0, 1)]),
            Err(TrainError::InvalidRecord(_))
        ));
    }

    #[test]
    fn exact_set_has_unit_mass_per_prompt() {
        let spaces = vec![ResponseSpace::from_probs("a", vec![0.2, 0.3, 0.5]).unwrap()];
        let set = TrainingSet::exact(&spaces, 3).unwrap();
        assert!((set.total_weight() - 1.0).abs() < 1e-14);
        assert!(set.num_records().is_none());
    }
}
