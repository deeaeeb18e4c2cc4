//! Seeded Monte Carlo: best/worst-of-n draws, preference datasets, empirical
//! win rates and the log-ratio expectation behind the IPO-BoN target.
//!
//! Every estimator splits its trials into fixed-size chunks, each drawn from
//! its own stream, and merges chunk statistics in chunk order. The result
//! depends only on `(seed, stream, trials)`, never on the thread count.

use crate::policy::{fold_joint, DiscretePolicy, PolicyError};
use crate::space::ResponseSpace;
use crate::tilt::pow_diff;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Trials per independent stream.
pub const CHUNK_TRIALS: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("n must be at least {min}, got {got}")]
    TooFewSamples { min: u32, got: u32 },
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// ChaCha8 stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream `k`; a pure function of `(seed, stream_id, k)`.
    pub fn derive(&self, k: u64) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(self.stream_id)), k)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Inverse-CDF draw: first index whose cumulative mass exceeds a uniform.
    pub fn categorical(&mut self, cumulative: &[f64]) -> usize {
        let u = self.uniform();
        cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1)
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        // Lemire's multiply-shift; bias is below 2^-64 * bound.
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Access to the underlying generator for `rand_distr` samplers.
    pub fn as_rng_core(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Best and worst of one n-sample, as 0-based canonical indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub prompt_id: String,
    #[serde(rename = "best")]
    pub best_index: usize,
    #[serde(rename = "worst")]
    pub worst_index: usize,
    pub n: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Fraction of records with `best == worst` (all n draws identical).
    pub degenerate_rate: f64,
    /// Fraction of n-samples containing at least one repeated response.
    pub repeat_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    pub n: u32,
    pub seed: u64,
    /// Prompt ids of the spaces the records were drawn from, in generation order.
    pub prompts: Vec<String>,
    /// Grouped by prompt, in `prompts` order.
    pub records: Vec<PreferenceRecord>,
    pub stats: DatasetStats,
}

impl PreferenceDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// One n-sample from the reference: index of the max-reward and min-reward draw.
pub fn sample_best_worst(space: &ResponseSpace, n: u32, rng: &mut Rng) -> Result<PreferenceRecord, SamplingError> {
    if n == 0 {
        return Err(SamplingError::TooFewSamples { min: 1, got: 0 });
    }
    let (best, worst, _) = draw_extremes(space.prefix().as_slice(), n, rng);
    Ok(PreferenceRecord {
        prompt_id: space.prompt_id().to_string(),
        best_index: best,
        worst_index: worst,
        n,
    })
}

/// Returns `(best, worst, any_repeat)`. Rewards increase with index, so the
/// extremes are the max and min drawn indices.
fn draw_extremes(cumulative: &[f64], n: u32, rng: &mut Rng) -> (usize, usize, bool) {
    let first = rng.categorical(cumulative);
    let (mut best, mut worst) = (first, first);
    let mut drawn = [0usize; 64];
    let track = (n as usize) <= drawn.len();
    if track {
        drawn[0] = first;
    }
    let mut repeat = false;
    for k in 1..n as usize {
        let i = rng.categorical(cumulative);
        best = best.max(i);
        worst = worst.min(i);
        if track {
            repeat |= drawn[..k].contains(&i);
            drawn[k] = i;
        }
    }
    (best, worst, repeat)
}

/// `records_per_prompt` best/worst records for every space, one stream per prompt.
pub fn gen_dataset(
    spaces: &[ResponseSpace],
    n: u32,
    records_per_prompt: usize,
    rng: &Rng,
) -> Result<PreferenceDataset, SamplingError> {
    if n == 0 {
        return Err(SamplingError::TooFewSamples { min: 1, got: 0 });
    }
    let per_prompt: Vec<(Vec<PreferenceRecord>, usize, usize)> = spaces
        .par_iter()
        .enumerate()
        .map(|(k, space)| {
            let mut stream = rng.derive(k as u64);
            let cumulative = space.prefix().as_slice();
            let mut records = Vec::with_capacity(records_per_prompt);
            let (mut degenerate, mut repeats) = (0usize, 0usize);
            for _ in 0..records_per_prompt {
                let (best, worst, repeat) = draw_extremes(cumulative, n, &mut stream);
                degenerate += (best == worst) as usize;
                repeats += repeat as usize;
                records.push(PreferenceRecord {
                    prompt_id: space.prompt_id().to_string(),
                    best_index: best,
                    worst_index: worst,
                    n,
                });
            }
            (records, degenerate, repeats)
        })
        .collect();

    let total = spaces.len() * records_per_prompt;
    let mut records = Vec::with_capacity(total);
    let (mut degenerate, mut repeats) = (0usize, 0usize);
    for (r, d, rep) in per_prompt {
        records.extend(r);
        degenerate += d;
        repeats += rep;
    }
    let rate = |k: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    Ok(PreferenceDataset {
        n,
        seed: rng.seed(),
        prompts: spaces.iter().map(|s| s.prompt_id().to_string()).collect(),
        records,
        stats: DatasetStats {
            degenerate_rate: rate(degenerate),
            repeat_rate: rate(repeats),
        },
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl McEstimate {
    /// Whether `target` lies within `k` standard errors of the estimate.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Streaming mean / sum of squared deviations, mergeable.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }

    fn estimate(&self) -> McEstimate {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            value: self.mean,
            std_error: (var / self.count as f64).sqrt(),
            trials: self.count,
        }
    }
}

/// Runs `trials` evaluations of `draw` in fixed chunks on derived streams.
fn chunked_estimate<F>(trials: u64, rng: &Rng, draw: F) -> McEstimate
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut stream = rng.derive(k);
            let len = CHUNK_TRIALS.min(trials - k * CHUNK_TRIALS);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(draw(&mut stream));
            }
            m
        })
        .collect();
    parts
        .into_iter()
        .fold(Moments::default(), Moments::merge)
        .estimate()
}

/// Monte Carlo estimate of `P(r(Y_a) >= r(Y_b))` with `Y_a ~ a`, `Y_b ~ b`.
pub fn mc_win_rate(
    space: &ResponseSpace,
    policy_a: &DiscretePolicy,
    policy_b: &DiscretePolicy,
    trials: u64,
    rng: &Rng,
) -> Result<McEstimate, SamplingError> {
    policy_a.check_space(space)?;
    policy_b.check_space(space)?;
    if trials == 0 {
        return Err(SamplingError::NoTrials);
    }
    let ca = policy_a.cumulative();
    let cb = policy_b.cumulative();
    Ok(chunked_estimate(trials, rng, |r| {
        let a = r.categorical(&ca);
        let b = r.categorical(&cb);
        (a >= b) as u8 as f64
    }))
}

/// `log(π^(n)(i) / p_i)` for every response, evaluated in log space:
/// `n log p_{1:i} + log(1 - (p_{1:i-1}/p_{1:i})^n) - log p_i`.
pub fn bon_log_ratios(space: &ResponseSpace, n: u32) -> Vec<f64> {
    let prefix = space.prefix();
    space
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let hi = prefix.upto(i);
            let lo = prefix.below(i);
            let ratio = lo / hi;
            let tail = pow_diff(1.0, ratio, p / hi, n);
            n as f64 * hi.ln() + tail.ln() - p.ln()
        })
        .collect()
}

/// `(n - 1) H_{n-1}`: the continuous-limit value of the statistic.
pub fn beta_identity_limit(n: u32) -> f64 {
    let m = n.saturating_sub(1);
    m as f64 * (1..=m).map(|k| 1.0 / k as f64).sum::<f64>()
}

/// Exact `E[h]` with `h = log(π^(n)(best)/π^(n)(worst)) - log(p_best/p_worst)`,
/// summing over the joint law of `(worst, best)` of one n-sample.
pub fn beta_identity_exact(space: &ResponseSpace, n: u32) -> Result<f64, SamplingError> {
    if n < 2 {
        return Err(SamplingError::TooFewSamples { min: 2, got: n });
    }
    let g = bon_log_ratios(space, n);
    Ok(fold_joint(space, n, |worst, row| {
        row.iter()
            .enumerate()
            .map(|(k, &prob)| if prob > 0.0 { prob * (g[worst + k] - g[worst]) } else { 0.0 })
            .sum()
    }))
}

/// Monte Carlo `E[h]` over jointly drawn `(best, worst)` pairs.
pub fn beta_identity_mc(space: &ResponseSpace, n: u32, trials: u64, rng: &Rng) -> Result<McEstimate, SamplingError> {
    if n < 2 {
        return Err(SamplingError::TooFewSamples { min: 2, got: n });
    }
    if trials == 0 {
        return Err(SamplingError::NoTrials);
    }
    let g = bon_log_ratios(space, n);
    let cumulative = space.prefix().as_slice();
    Ok(chunked_estimate(trials, rng, |r| {
        let (best, worst, _) = draw_extremes(cumulative, n, r);
        g[best] - g[worst]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::bon_policy_exact;

    #[test]
    fn rng_reproducible_and_streams_differ() {
        let mut a = Rng::new(7, 0);
        let mut b = Rng::new(7, 0);
        let mut c = Rng::new(7, 1);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        let mut u = Rng::new(1, 2);
        for _ in 0..1000 {
            let x = u.uniform();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn single_draw_has_best_equal_worst() {
        let s = ResponseSpace::uniform("u", 10).unwrap();
        let mut rng = Rng::new(3, 0);
        for _ in 0..100 {
            let r = sample_best_worst(&s, 1, &mut rng).unwrap();
            assert_eq!(r.best_index, r.worst_index);
        }
    }

    #[test]
    fn point_mass_space_samples_dominant() {
        let eps = 1e-12;
        let s = ResponseSpace::from_probs("d", vec![eps, 1.0 - 2.0 * eps, eps]).unwrap();
        let mut rng = Rng::new(5, 0);
        for _ in 0..1000 {
            let r = sample_best_worst(&s, 4, &mut rng).unwrap();
            assert_eq!((r.best_index, r.worst_index), (1, 1));
        }
    }

    #[test]
    fn empty_and_deterministic_datasets() {
        let spaces = vec![ResponseSpace::uniform("a", 5).unwrap(), ResponseSpace::uniform("b", 7).unwrap()];
        let rng = Rng::new(11, 0);
        let empty = gen_dataset(&spaces, 4, 0, &rng).unwrap();
        assert!(empty.is_empty());
        let d1 = gen_dataset(&spaces, 4, 50, &rng).unwrap();
        let d2 = gen_dataset(&spaces, 4, 50, &rng).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.len(), 100);
        assert!(d1.records[..50].iter().all(|r| r.prompt_id == "a"));
        assert!(d1.records.iter().all(|r| r.best_index >= r.worst_index));
    }

    #[test]
    fn merged_moments_match_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        let merged = a.merge(b);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.m2 - whole.m2).abs() < 1e-8);
    }

    #[test]
    fn point_mass_policy_always_wins() {
        let s = ResponseSpace::uniform("u", 5).unwrap();
        let top = DiscretePolicy::point_mass_on_best(&s);
        let est = mc_win_rate(&s, &top, &DiscretePolicy::reference(&s), 10_000, &Rng::new(1, 0)).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn log_ratios_match_direct_formula() {
        let s = ResponseSpace::from_probs("s", vec![0.1, 0.3, 0.2, 0.4]).unwrap();
        let bon = bon_policy_exact(&s, 3).unwrap();
        let g = bon_log_ratios(&s, 3);
        for i in 0..4 {
            let direct = (bon.probs()[i] / s.probs()[i]).ln();
            assert!((g[i] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn statistic_rejects_small_n() {
        let s = ResponseSpace::uniform("u", 3).unwrap();
        assert!(beta_identity_exact(&s, 1).is_err());
        assert!(beta_identity_mc(&s, 1, 10, &Rng::new(0, 0)).is_err());
    }

    #[test]
    fn limit_values() {
        assert_eq!(beta_identity_limit(2), 1.0);
        assert!((beta_identity_limit(8) - 18.15).abs() < 1e-12);
    }

    #[test]
    fn uniform2_exact_statistic_below_limit() {
        let s = ResponseSpace::uniform("u", 2).unwrap();
        let v = beta_identity_exact(&s, 2).unwrap();
        // Only (best=1, worst=0), mass 1/2, carries h = log 3.
        assert!((v - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!(v < 1.0);
    }
}
