//! The CLI subcommands as library functions writing into a run directory.

use crate::error::{HarnessError, Result};
use crate::formats::{self, FORMAT_VERSION};
use crate::manifest::Run;
use crate::spec::{BoundsSpec, CurvesSpec, EvalSpec, GenSpec, TrainSpec};
use bonbon_core::analytics::{
    area_diff, closed_kl, closed_win_rate, kl_report, matched_pair, optimal_point, tilt_win_rate_report, KlReport,
    WinRateReport, BOUND_SLACK,
};
use bonbon_core::policy::bon_policy_exact;
use bonbon_core::sampling::gen_dataset;
use bonbon_core::training::{train, TabularPolicy, TrainError};
use bonbon_core::{ResponseSpace, Rng, TiltFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stream of the run seed used for dataset sampling; spaces use stream 0.
pub const DATASET_STREAM: u64 = 1;

/// What a command reports back to the CLI.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Outcome {
    fn ok(lines: Vec<String>) -> Self {
        Outcome { passed: true, lines }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub label: String,
    pub parameter: f64,
    pub kl: f64,
    pub win_rate: f64,
    pub gap: Option<f64>,
    pub error: Option<String>,
}

pub fn curve_rows(spec: &CurvesSpec) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for &n in &spec.n_values {
        match matched_pair(n) {
            Ok(pair) => {
                for p in [pair.bon, pair.optimal] {
                    rows.push(CurveRow {
                        label: p.label,
                        parameter: p.parameter,
                        kl: p.kl,
                        win_rate: p.win_rate,
                        gap: p.gap,
                        error: None,
                    });
                }
            }
            Err(e) => {
                let tilt = TiltFunction::Power { n };
                rows.push(CurveRow {
                    label: "bon".into(),
                    parameter: n as f64,
                    kl: closed_kl(tilt),
                    win_rate: closed_win_rate(tilt),
                    gap: None,
                    error: None,
                });
                rows.push(CurveRow {
                    label: "optimal".into(),
                    parameter: f64::NAN,
                    kl: closed_kl(tilt),
                    win_rate: f64::NAN,
                    gap: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    for &kl in &spec.kl_grid {
        rows.push(match optimal_point(kl) {
            Ok(p) => CurveRow {
                label: p.label,
                parameter: p.parameter,
                kl: p.kl,
                win_rate: p.win_rate,
                gap: None,
                error: None,
            },
            Err(e) => CurveRow {
                label: "optimal".into(),
                parameter: f64::NAN,
                kl,
                win_rate: f64::NAN,
                gap: None,
                error: Some(e.to_string()),
            },
        });
    }
    rows
}

pub fn cmd_curves(spec: &CurvesSpec, run: &mut Run) -> Result<Outcome> {
    let rows = curve_rows(spec);
    formats::write_csv(&run.path("curves.csv"), &rows)?;
    run.record("curves.csv")?;
    let mut lines = vec![format!("{} curve rows written", rows.len())];
    if let Some(gap) = rows.iter().find(|r| r.label == "bon" && r.parameter == 2.0).and_then(|r| r.gap) {
        let verdict = if gap > 0.0 && gap < 0.01 { "pass" } else { "FAIL" };
        lines.push(format!("n=2 optimal-minus-bon gap {gap:.6} (threshold 0.01): {verdict}"));
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        lines.push(format!("{failed} rows had solver errors"));
    }
    Ok(Outcome::ok(lines))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    pub kl_below_continuous: bool,
    pub kl_gap_within_bound: bool,
    pub win_rate_sandwich: bool,
    pub win_rate_gap_within_bound: bool,
}

impl BoundChecks {
    pub fn all(&self) -> bool {
        self.kl_below_continuous && self.kl_gap_within_bound && self.win_rate_sandwich && self.win_rate_gap_within_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEntry {
    pub space: String,
    pub tilt: String,
    pub area_diff: f64,
    pub kl: KlReport,
    pub win_rate: WinRateReport,
    pub checks: BoundChecks,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub format_version: u64,
    pub entries: Vec<BoundsEntry>,
    pub violations: usize,
    pub all_passed: bool,
}

pub fn bounds_entry(space: &ResponseSpace, tilt: TiltFunction) -> Result<BoundsEntry> {
    let kl = kl_report(space, tilt)?;
    let wr = tilt_win_rate_report(space, tilt)?;
    let closed = wr.continuous_closed_form.unwrap_or(f64::NAN);
    let checks = BoundChecks {
        kl_below_continuous: kl.discrete_below_continuous(),
        kl_gap_within_bound: kl.gap_within_bound(),
        win_rate_sandwich: wr.sandwich_ok == Some(true),
        win_rate_gap_within_bound: wr.with_ties - closed <= kl.win_rate_gap_bound + BOUND_SLACK
            && closed - wr.without_ties <= kl.win_rate_gap_bound + BOUND_SLACK,
    };
    Ok(BoundsEntry {
        space: space.prompt_id().to_string(),
        tilt: tilt.to_string(),
        area_diff: area_diff(space),
        kl,
        win_rate: wr,
        passed: checks.all(),
        checks,
    })
}

pub fn bounds_report(spaces: &[ResponseSpace], tilts: &[TiltFunction]) -> Result<BoundsReport> {
    let entries: Vec<BoundsEntry> = spaces
        .par_iter()
        .map(|s| tilts.iter().map(|&t| bounds_entry(s, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let violations = entries.iter().filter(|e| !e.passed).count();
    Ok(BoundsReport {
        format_version: FORMAT_VERSION,
        violations,
        all_passed: violations == 0,
        entries,
    })
}

pub fn cmd_bounds(spec: &BoundsSpec, run: &mut Run) -> Result<Outcome> {
    let spaces = load_spaces(&spec.source(), spec.seed, run)?;
    let tilts: Vec<TiltFunction> = spec.tilts.iter().map(|t| t.0).collect();
    let report = bounds_report(&spaces, &tilts)?;
    formats::write_json(&run.path("bounds.json"), &report)?;
    run.record("bounds.json")?;
    let mut lines = vec![format!(
        "{} (space, tilt) pairs checked, {} violations",
        report.entries.len(),
        report.violations
    )];
    for e in report.entries.iter().filter(|e| !e.passed) {
        lines.push(format!("violation: space {} tilt {} {:?}", e.space, e.tilt, e.checks));
    }
    Ok(Outcome {
        passed: report.all_passed,
        lines,
    })
}

fn load_spaces(source: &crate::spec::SpaceSource, seed: u64, run: &mut Run) -> Result<Vec<ResponseSpace>> {
    if let Some(path) = &source.spaces {
        run.record_input(path)?;
    }
    source.load(seed)
}

pub fn cmd_gen(spec: &GenSpec, run: &mut Run) -> Result<Outcome> {
    let spaces = load_spaces(&spec.source(), spec.seed, run)?;
    let data = gen_dataset(&spaces, spec.n, spec.records_per_prompt, &Rng::new(spec.seed, DATASET_STREAM))?;
    formats::write_spaces(&run.path("spaces.json"), &spaces)?;
    formats::write_dataset(&run.path("dataset.jsonl"), &data)?;
    run.record("spaces.json")?;
    run.record("dataset.jsonl")?;
    Ok(Outcome::ok(vec![format!(
        "{} records over {} prompts (n={}, degenerate rate {:.4}, repeat rate {:.4})",
        data.len(),
        spaces.len(),
        data.n,
        data.stats.degenerate_rate,
        data.stats.repeat_rate
    )]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEval {
    pub prompt_id: String,
    pub win_rate_with_ties: f64,
    pub win_rate_without_ties: f64,
    pub kl_vs_reference: f64,
    pub mean_attribute: Option<f64>,
    pub tv_to_bon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeans {
    pub win_rate_with_ties: f64,
    pub win_rate_without_ties: f64,
    pub kl_vs_reference: f64,
    pub mean_attribute: Option<f64>,
    pub tv_to_bon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u64,
    pub n: u32,
    pub mean: EvalMeans,
    pub prompts: Vec<PromptEval>,
}

/// Exact metrics of a tabular policy, plus its distance to best-of-n.
pub fn evaluate_policy(spaces: &[ResponseSpace], policy: &TabularPolicy, n: u32) -> Result<EvalReport> {
    let prompts: Vec<PromptEval> = spaces
        .par_iter()
        .enumerate()
        .map(|(k, space)| {
            let pol = policy.policy(k);
            let m = bonbon_core::analytics::eval_policy(space, &pol)?;
            let bon = bon_policy_exact(space, n)?;
            Ok(PromptEval {
                prompt_id: space.prompt_id().to_string(),
                win_rate_with_ties: m.win_rate_with_ties,
                win_rate_without_ties: m.win_rate_without_ties,
                kl_vs_reference: m.kl_vs_reference,
                mean_attribute: m.mean_attribute,
                tv_to_bon: pol.total_variation(&bon),
            })
        })
        .collect::<std::result::Result<Vec<_>, bonbon_core::PolicyError>>()?;
    let count = prompts.len() as f64;
    let mean = |f: &dyn Fn(&PromptEval) -> f64| prompts.iter().map(f).sum::<f64>() / count;
    let mean_attribute = prompts
        .iter()
        .map(|p| p.mean_attribute)
        .sum::<Option<f64>>()
        .map(|s| s / count);
    Ok(EvalReport {
        format_version: FORMAT_VERSION,
        n,
        mean: EvalMeans {
            win_rate_with_ties: mean(&|p| p.win_rate_with_ties),
            win_rate_without_ties: mean(&|p| p.win_rate_without_ties),
            kl_vs_reference: mean(&|p| p.kl_vs_reference),
            mean_attribute,
            tv_to_bon: mean(&|p| p.tv_to_bon),
        },
        prompts,
    })
}

fn eval_lines(report: &EvalReport) -> Vec<String> {
    let m = &report.mean;
    let mut line = format!(
        "mean over {} prompts: win rate {:.4} (without ties {:.4}), KL {:.4}, TV to best-of-{} {:.4}",
        report.prompts.len(),
        m.win_rate_with_ties,
        m.win_rate_without_ties,
        m.kl_vs_reference,
        report.n,
        m.tv_to_bon
    );
    if let Some(a) = m.mean_attribute {
        line.push_str(&format!(", attribute {a:.3}"));
    }
    vec![line]
}

pub fn cmd_train(spec: &TrainSpec, run: &mut Run) -> Result<Outcome> {
    let spaces = load_spaces(&spec.source(), spec.seed, run)?;
    let data = match &spec.dataset {
        Some(path) => {
            run.record_input(path)?;
            formats::read_dataset(path)?
        }
        None => gen_dataset(
            &spaces,
            spec.train.n,
            spec.records_per_prompt,
            &Rng::new(spec.seed, DATASET_STREAM),
        )?,
    };
    formats::write_spaces(&run.path("spaces.json"), &spaces)?;
    run.record("spaces.json")?;
    let (policy, trace) = match train(&spec.train, &spaces, &data) {
        Ok(v) => v,
        Err(TrainError::Divergence { step, trace, policy }) => {
            formats::write_trace(&run.path("trace.csv"), &trace)?;
            formats::write_policy(&run.path("policy.json"), &policy)?;
            run.record("trace.csv")?;
            run.record("policy.json")?;
            return Err(HarnessError::Train(TrainError::Divergence { step, trace, policy }));
        }
        Err(e) => return Err(e.into()),
    };
    formats::write_trace(&run.path("trace.csv"), &trace)?;
    formats::write_policy(&run.path("policy.json"), &policy)?;
    let report = evaluate_policy(&spaces, &policy, spec.train.n)?;
    formats::write_json(&run.path("metrics.json"), &report)?;
    for f in ["trace.csv", "policy.json", "metrics.json"] {
        run.record(f)?;
    }
    let mut lines = vec![format!(
        "trained {} for {} steps on {} records",
        spec.train.loss.name(),
        spec.train.steps,
        data.len()
    )];
    if let Some(last) = trace.last() {
        lines.push(format!(
            "final loss {:.6} (sft term {:.4}, ipo term {:.4}, mean h {:.4})",
            last.loss, last.sft_term, last.ipo_term, last.mean_h
        ));
    }
    lines.extend(eval_lines(&report));
    Ok(Outcome::ok(lines))
}

pub fn cmd_eval(spec: &EvalSpec, run: &mut Run) -> Result<Outcome> {
    let spaces = load_spaces(&spec.source(), spec.seed, run)?;
    let policy = match &spec.policy {
        Some(path) => {
            run.record_input(path)?;
            formats::read_policy(path, &spaces)?
        }
        None => TabularPolicy::from_reference(&spaces),
    };
    let report = evaluate_policy(&spaces, &policy, spec.n)?;
    formats::write_json(&run.path("metrics.json"), &report)?;
    run.record("metrics.json")?;
    Ok(Outcome::ok(eval_lines(&report)))
}
