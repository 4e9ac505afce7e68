//! File formats.
//!
//! Ratings and scores are JSON Lines, one object per line. Reports, protocol
//! results and manifests are single JSON documents written canonically:
//! object keys sorted, floats rounded to 12 significant digits, two-space
//! indentation and a trailing newline, so that reruns can be compared byte
//! for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adapter::ScalarScoreRecord;
use crate::error::{Error, Result};
use crate::types::{PreferenceRecord, RatingSource, SystemId};

/// Current dataset format version.
pub const DATASET_FORMAT_VERSION: u32 = 1;

const RECORD_KEYS: [&str; 6] = ["metric_name", "outcome", "sample_id", "source", "system_a", "system_b"];
const SCORE_KEYS: [&str; 5] = ["rater_id", "rater_kind", "sample_id", "score", "system"];

fn parse_lines<T, R>(reader: R, strict: bool, known: &[&str]) -> Result<Vec<(usize, T)>>
where
    T: DeserializeOwned,
    R: Read,
{
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let Value::Object(map) = &value else {
            return Err(parse_err("expected a JSON object".into()));
        };
        if strict {
            if let Some(k) = map.keys().find(|k| !known.contains(&k.as_str())) {
                return Err(parse_err(format!("unknown key '{k}'")));
            }
        }
        let item = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        out.push((line_no, item));
    }
    Ok(out)
}

/// Parse preference records. Under `strict`, unknown keys are errors;
/// otherwise they are ignored. Invalid records and duplicates (same sample,
/// unordered pair, source and metric) are errors naming the line.
pub fn read_preference_records<R: Read>(reader: R, strict: bool) -> Result<Vec<PreferenceRecord>> {
    let parsed: Vec<(usize, PreferenceRecord)> = parse_lines(reader, strict, &RECORD_KEYS)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(parsed.len());
    for (line, r) in parsed {
        r.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let (a, b) = if r.system_a <= r.system_b {
            (&r.system_a, &r.system_b)
        } else {
            (&r.system_b, &r.system_a)
        };
        let key = (r.sample_id.clone(), a.clone(), b.clone(), r.source, r.metric_name.clone());
        if !seen.insert(key) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate rating of sample '{}' for {a} vs {b}", r.sample_id),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_preference_records(path: impl AsRef<Path>, strict: bool) -> Result<Vec<PreferenceRecord>> {
    read_preference_records(fs::File::open(path)?, strict)
}

fn write_lines<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_preference_records<W: Write>(w: W, records: &[PreferenceRecord]) -> Result<()> {
    write_lines(w, records)
}

pub fn save_preference_records(path: impl AsRef<Path>, records: &[PreferenceRecord]) -> Result<()> {
    write_lines(std::io::BufWriter::new(fs::File::create(path)?), records)
}

/// Parse scalar score records; same error contract as preference records.
/// Duplicates are the same (sample, system, rater kind, rater).
pub fn read_scalar_scores<R: Read>(reader: R, strict: bool) -> Result<Vec<ScalarScoreRecord>> {
    let parsed: Vec<(usize, ScalarScoreRecord)> = parse_lines(reader, strict, &SCORE_KEYS)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(parsed.len());
    for (line, r) in parsed {
        r.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert((r.sample_id.clone(), r.system.clone(), r.rater_kind, r.rater_id.clone())) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate score of sample '{}' for {} by {}", r.sample_id, r.system, r.rater_id),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_scalar_scores(path: impl AsRef<Path>, strict: bool) -> Result<Vec<ScalarScoreRecord>> {
    read_scalar_scores(fs::File::open(path)?, strict)
}

pub fn save_scalar_scores(path: impl AsRef<Path>, scores: &[ScalarScoreRecord]) -> Result<()> {
    write_lines(std::io::BufWriter::new(fs::File::create(path)?), scores)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked is_f64");
            let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
            if let Some(r) = serde_json::Number::from_f64(rounded) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Canonical JSON text of `value`.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's Map is ordered by key, so conversion sorts every object.
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Write `value` canonically, replacing the file atomically.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = to_canonical_json(value)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Summary of a rating dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Record counts per pair key (`a:b` with `a < b`) and source
    /// (`human`, or the metric name).
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
    pub format_version: u32,
    pub metrics: Vec<String>,
    pub systems: Vec<SystemId>,
}

fn unordered_key(r: &PreferenceRecord) -> String {
    if r.system_a <= r.system_b {
        format!("{}:{}", r.system_a, r.system_b)
    } else {
        format!("{}:{}", r.system_b, r.system_a)
    }
}

pub fn build_manifest(records: &[PreferenceRecord]) -> DatasetManifest {
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut metrics = BTreeSet::new();
    let mut systems = BTreeSet::new();
    for r in records {
        let source = match r.source {
            RatingSource::Human => "human".to_string(),
            RatingSource::Metric => {
                let name = r.metric_name.clone().unwrap_or_default();
                metrics.insert(name.clone());
                name
            }
        };
        systems.insert(r.system_a.clone());
        systems.insert(r.system_b.clone());
        *counts.entry(unordered_key(r)).or_default().entry(source).or_default() += 1;
    }
    DatasetManifest {
        counts,
        format_version: DATASET_FORMAT_VERSION,
        metrics: metrics.into_iter().collect(),
        systems: systems.into_iter().collect(),
    }
}

/// Check that `records` match the manifest exactly.
pub fn verify_manifest(manifest: &DatasetManifest, records: &[PreferenceRecord]) -> Result<()> {
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "unsupported dataset format version {}",
            manifest.format_version
        )));
    }
    let actual = build_manifest(records);
    let pairs: BTreeSet<&String> = manifest.counts.keys().chain(actual.counts.keys()).collect();
    for pair in pairs {
        let want = manifest.counts.get(pair);
        let got = actual.counts.get(pair);
        if want != got {
            return Err(Error::invalid(format!(
                "manifest counts for {pair} are {:?} but the records give {:?}",
                want.cloned().unwrap_or_default(),
                got.cloned().unwrap_or_default()
            )));
        }
    }
    let listed: BTreeSet<&SystemId> = manifest.systems.iter().collect();
    if let Some(s) = actual.systems.iter().find(|s| !listed.contains(s)) {
        return Err(Error::invalid(format!("system '{s}' is not listed in the manifest")));
    }
    Ok(())
}

/// Split records into human and metric records.
pub fn split_by_source(records: Vec<PreferenceRecord>) -> (Vec<PreferenceRecord>, Vec<PreferenceRecord>) {
    records.into_iter().partition(|r| r.source == RatingSource::Human)
}
