//! Per-command experiment specs. Unknown fields are rejected; every field
//! has a default so a missing `--spec` runs the default experiment.

use crate::error::{HarnessError, Result};
use crate::formats::read_spaces;
use bonbon_core::synth::{synth_spaces, ProbDistribution, SynthConfig};
use bonbon_core::training::{LossKind, TrainConfig};
use bonbon_core::{ResponseSpace, TiltFunction};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Synthetic space family; its seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub prompts: usize,
    pub responses: usize,
    pub distribution: ProbDistribution,
    pub attribute_correlation: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            prompts: 20,
            responses: 100,
            distribution: ProbDistribution::Dirichlet(1.0),
            attribute_correlation: 0.3,
        }
    }
}

impl GeneratorSpec {
    pub fn generate(&self, seed: u64) -> Result<Vec<ResponseSpace>> {
        let mut cfg = SynthConfig::new(self.prompts, self.responses, self.distribution, seed);
        cfg.attribute_correlation = self.attribute_correlation;
        Ok(synth_spaces(&cfg)?)
    }
}

/// Either a spaces file or a generator; neither means the default generator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpaceSource {
    pub spaces: Option<PathBuf>,
    pub generator: Option<GeneratorSpec>,
}

impl SpaceSource {
    fn validate(&self) -> Result<()> {
        if self.spaces.is_some() && self.generator.is_some() {
            return Err(HarnessError::Spec("give either `spaces` or `generator`, not both".into()));
        }
        Ok(())
    }

    pub fn load(&self, seed: u64) -> Result<Vec<ResponseSpace>> {
        match &self.spaces {
            Some(path) => read_spaces(path),
            None => self.generator.clone().unwrap_or_default().generate(seed),
        }
    }
}

fn resolve_path(p: &mut Option<PathBuf>, base: &Path) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// A tilt written as `power(8)` or `exponential(1.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltSpec(pub TiltFunction);

impl Serialize for TiltSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for TiltSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(TiltSpec).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvesSpec {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub n_values: Vec<u32>,
    /// Extra KL values at which to evaluate the optimal policy alone.
    pub kl_grid: Vec<f64>,
}

impl Default for CurvesSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            n_values: (1..=16).collect(),
            kl_grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSpec {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spaces: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub tilts: Vec<TiltSpec>,
}

pub fn default_tilts() -> Vec<TiltSpec> {
    vec![
        TiltSpec(TiltFunction::Power { n: 2 }),
        TiltSpec(TiltFunction::Power { n: 8 }),
        TiltSpec(TiltFunction::Exponential { c: 1.0 }),
        TiltSpec(TiltFunction::Exponential { c: 5.0 }),
    ]
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            spaces: None,
            generator: None,
            tilts: default_tilts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spaces: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub n: u32,
    pub records_per_prompt: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            spaces: None,
            generator: None,
            n: 8,
            records_per_prompt: 10_000,
        }
    }
}

pub fn default_train_config() -> TrainConfig {
    let mut cfg = TrainConfig::new(LossKind::Bonbon, 8, 500);
    cfg.eval_every = 50;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spaces: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Dataset JSONL from `gen`; when absent one is sampled with the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub records_per_prompt: usize,
    pub train: TrainConfig,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            spaces: None,
            generator: None,
            dataset: None,
            records_per_prompt: 10_000,
            train: default_train_config(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spaces: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Policy JSON from `train`; when absent the reference is evaluated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,
    /// Best-of-n policy to measure total variation against.
    pub n: u32,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            spaces: None,
            generator: None,
            policy: None,
            n: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "kebab-case")]
pub enum Fault {
    /// Perturb β*_n before the β* criterion is checked.
    BetaStar,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReproduceSpec {
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<Fault>,
}

/// Shared plumbing so the CLI can treat every spec the same way.
pub trait Spec: Serialize + DeserializeOwned + Default + Clone {
    const COMMAND: &'static str;
    fn seed_mut(&mut self) -> &mut u64;
    fn output_dir(&self) -> Option<&Path>;
    fn resolve_paths(&mut self, _base: &Path) {}
    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

macro_rules! with_source {
    ($($t:ty),*) => {$(
        impl $t {
            pub fn source(&self) -> SpaceSource {
                SpaceSource {
                    spaces: self.spaces.clone(),
                    generator: self.generator.clone(),
                }
            }
        }
    )*};
}

with_source!(BoundsSpec, GenSpec, TrainSpec, EvalSpec);

macro_rules! spec_common {
    () => {
        fn seed_mut(&mut self) -> &mut u64 {
            &mut self.seed
        }
        fn output_dir(&self) -> Option<&Path> {
            self.output_dir.as_deref()
        }
    };
}

impl Spec for CurvesSpec {
    const COMMAND: &'static str = "curves";
    spec_common!();
    fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(HarnessError::Spec("n_values is empty".into()));
        }
        if self.n_values.contains(&0) {
            return Err(HarnessError::Spec("n_values must be >= 1".into()));
        }
        if let Some(d) = self.kl_grid.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(HarnessError::Spec(format!("kl_grid values must be finite and >= 0, got {d}")));
        }
        Ok(())
    }
}

impl Spec for BoundsSpec {
    const COMMAND: &'static str = "bounds";
    spec_common!();
    fn resolve_paths(&mut self, base: &Path) {
        resolve_path(&mut self.spaces, base);
    }
    fn validate(&self) -> Result<()> {
        self.source().validate()?;
        if self.tilts.is_empty() {
            return Err(HarnessError::Spec("tilts is empty".into()));
        }
        Ok(())
    }
}

impl Spec for GenSpec {
    const COMMAND: &'static str = "gen";
    spec_common!();
    fn resolve_paths(&mut self, base: &Path) {
        resolve_path(&mut self.spaces, base);
    }
    fn validate(&self) -> Result<()> {
        self.source().validate()?;
        if self.n == 0 {
            return Err(HarnessError::Spec("n must be >= 1".into()));
        }
        Ok(())
    }
}

impl Spec for TrainSpec {
    const COMMAND: &'static str = "train";
    spec_common!();
    fn resolve_paths(&mut self, base: &Path) {
        resolve_path(&mut self.spaces, base);
        resolve_path(&mut self.dataset, base);
    }
    fn validate(&self) -> Result<()> {
        self.source().validate()?;
        self.train.objective()?;
        Ok(())
    }
}

impl Spec for EvalSpec {
    const COMMAND: &'static str = "eval";
    spec_common!();
    fn resolve_paths(&mut self, base: &Path) {
        resolve_path(&mut self.spaces, base);
        resolve_path(&mut self.policy, base);
    }
    fn validate(&self) -> Result<()> {
        self.source().validate()?;
        if self.n == 0 {
            return Err(HarnessError::Spec("n must be >= 1".into()));
        }
        Ok(())
    }
}

impl Spec for ReproduceSpec {
    const COMMAND: &'static str = "reproduce";
    spec_common!();
}

/// Loads a spec file (or the default), applies the seed override, resolves
/// relative paths against the spec's directory and validates.
pub fn load_spec<S: Spec>(path: Option<&Path>, seed: Option<u64>) -> Result<S> {
    let mut spec: S = match path {
        Some(p) => {
            let text = crate::formats::read_text(p)?;
            let mut s: S = serde_json::from_str(&text).map_err(|e| HarnessError::parse(p, e))?;
            s.resolve_paths(p.parent().unwrap_or(Path::new(".")));
            s
        }
        None => S::default(),
    };
    if let Some(seed) = seed {
        *spec.seed_mut() = seed;
    }
    spec.validate()?;
    Ok(spec)
}

/// Canonical JSON of a resolved spec; `output_dir` is excluded.
pub fn canonical_json<S: Spec>(spec: &S) -> String {
    serde_json::to_string(spec).expect("specs always serialize")
}
