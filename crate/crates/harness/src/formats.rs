//! On-disk formats. Every file carries an integer `format_version`; readers
//! reject anything but the version they were built for.

use crate::error::{HarnessError, Result};
use bonbon_core::sampling::{DatasetStats, PreferenceDataset, PreferenceRecord};
use bonbon_core::training::{TabularPolicy, TrainTrace};
use bonbon_core::{ResponseSpace, SpaceRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const FORMAT_VERSION: u64 = 1;
/// Bumped whenever the sampling scheme behind `gen` changes.
pub const GENERATOR_VERSION: u64 = 1;
pub const CSV_VERSION_LINE: &str = "# format_version: 1";

fn check_version(path: &Path, found: u64) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(HarnessError::UnsupportedVersion {
            path: path.to_path_buf(),
            found,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| HarnessError::parse(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::parse(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpacesFile {
    format_version: u64,
    spaces: Vec<SpaceRecord>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpacesInput {
    Versioned(SpacesFile),
    Bare(Vec<SpaceRecord>),
}

/// Accepts `{format_version, spaces: [...]}` or a bare array of spaces.
pub fn read_spaces(path: &Path) -> Result<Vec<ResponseSpace>> {
    let records = match read_json::<SpacesInput>(path)? {
        SpacesInput::Versioned(f) => {
            check_version(path, f.format_version)?;
            f.spaces
        }
        SpacesInput::Bare(v) => v,
    };
    if records.is_empty() {
        return Err(HarnessError::parse(path, "no spaces"));
    }
    let spaces = records
        .into_iter()
        .enumerate()
        .map(|(k, r)| ResponseSpace::try_from(r).map_err(|e| HarnessError::parse(path, format!("space {k}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::BTreeSet::new();
    for s in &spaces {
        if !seen.insert(s.prompt_id()) {
            return Err(HarnessError::parse(path, format!("duplicate prompt_id {:?}", s.prompt_id())));
        }
    }
    Ok(spaces)
}

pub fn write_spaces(path: &Path, spaces: &[ResponseSpace]) -> Result<()> {
    write_json(
        path,
        &SpacesFile {
            format_version: FORMAT_VERSION,
            spaces: spaces.iter().map(|s| s.to_record()).collect(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u64,
    pub generator_version: u64,
    pub seed: u64,
    pub n: u32,
    pub prompts: Vec<String>,
    pub degenerate_rate: f64,
    pub repeat_rate: f64,
}

/// First line is the header; each following line is one record.
pub fn write_dataset(path: &Path, data: &PreferenceDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        generator_version: GENERATOR_VERSION,
        seed: data.seed,
        n: data.n,
        prompts: data.prompts.clone(),
        degenerate_rate: data.stats.degenerate_rate,
        repeat_rate: data.stats.repeat_rate,
    };
    let io = |e| HarnessError::io(path, e);
    let json = |e: serde_json::Error| HarnessError::parse(path, e);
    writeln!(w, "{}", serde_json::to_string(&header).map_err(json)?).map_err(io)?;
    for r in &data.records {
        writeln!(w, "{}", serde_json::to_string(r).map_err(json)?).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    prompt_id: String,
    best: usize,
    worst: usize,
    n: u32,
}

pub fn read_dataset(path: &Path) -> Result<PreferenceDataset> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| HarnessError::parse(path, "missing header line"))?
        .map_err(|e| HarnessError::io(path, e))?;
    let version: serde_json::Value = serde_json::from_str(&first).map_err(|e| HarnessError::parse(path, e))?;
    let found = version.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
    check_version(path, found)?;
    let header: DatasetHeader = serde_json::from_value(version).map_err(|e| HarnessError::parse(path, e))?;
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordLine =
            serde_json::from_str(&line).map_err(|e| HarnessError::parse(path, format!("line {}: {e}", k + 2)))?;
        if r.n != header.n {
            return Err(HarnessError::parse(
                path,
                format!("line {}: record n={} but header n={}", k + 2, r.n, header.n),
            ));
        }
        records.push(PreferenceRecord {
            prompt_id: r.prompt_id,
            best_index: r.best,
            worst_index: r.worst,
            n: r.n,
        });
    }
    Ok(PreferenceDataset {
        n: header.n,
        seed: header.seed,
        prompts: header.prompts,
        records,
        stats: DatasetStats {
            degenerate_rate: header.degenerate_rate,
            repeat_rate: header.repeat_rate,
        },
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    format_version: u64,
    logits: BTreeMap<String, Vec<f64>>,
}

pub fn write_policy(path: &Path, policy: &TabularPolicy) -> Result<()> {
    let logits = policy
        .prompt_ids()
        .iter()
        .cloned()
        .zip(policy.all_logits().iter().cloned())
        .collect();
    write_json(
        path,
        &PolicyFile {
            format_version: FORMAT_VERSION,
            logits,
        },
    )
}

/// Reads logits keyed by prompt id and lays them out in `spaces` order.
pub fn read_policy(path: &Path, spaces: &[ResponseSpace]) -> Result<TabularPolicy> {
    let raw: serde_json::Value = read_json(path)?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
    check_version(path, found)?;
    let file: PolicyFile = serde_json::from_value(raw).map_err(|e| HarnessError::parse(path, e))?;
    if file.logits.len() != spaces.len() {
        return Err(HarnessError::parse(
            path,
            format!("policy has {} prompts, spaces have {}", file.logits.len(), spaces.len()),
        ));
    }
    let mut ids = Vec::with_capacity(spaces.len());
    let mut logits = Vec::with_capacity(spaces.len());
    for s in spaces {
        let row = file
            .logits
            .get(s.prompt_id())
            .ok_or_else(|| HarnessError::parse(path, format!("no logits for prompt {:?}", s.prompt_id())))?;
        if row.len() != s.len() || row.iter().any(|x| !x.is_finite()) {
            return Err(HarnessError::parse(
                path,
                format!("logits for {:?} must be {} finite numbers", s.prompt_id(), s.len()),
            ));
        }
        ids.push(s.prompt_id().to_string());
        logits.push(row.clone());
    }
    Ok(TabularPolicy::from_logits(ids, logits))
}

/// CSV with a leading `# format_version` comment line.
pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    writeln!(file, "{CSV_VERSION_LINE}").map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::parse(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let version = first
        .trim()
        .strip_prefix("# format_version:")
        .and_then(|v| v.trim().parse::<u64>().ok())
        .ok_or_else(|| HarnessError::parse(path, "missing format_version comment"))?;
    check_version(path, version)?;
    csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::parse(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub step: usize,
    pub loss: f64,
    pub win_rate: f64,
    pub kl: f64,
    pub mean_attribute: Option<f64>,
    pub mean_h: f64,
    pub sft_term: f64,
    pub ipo_term: f64,
}

pub fn write_trace(path: &Path, trace: &TrainTrace) -> Result<()> {
    let rows: Vec<TraceCsvRow> = trace
        .rows
        .iter()
        .map(|r| TraceCsvRow {
            step: r.step,
            loss: r.loss,
            win_rate: r.win_rate,
            kl: r.kl,
            mean_attribute: r.mean_attribute,
            mean_h: r.mean_h,
            sft_term: r.sft_term,
            ipo_term: r.ipo_term,
        })
        .collect();
    write_csv(path, &rows)
}
