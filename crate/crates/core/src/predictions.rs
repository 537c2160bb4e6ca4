//! Line-delimited prediction records shared by `predict`, `crossval` and
//! `eval`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::metrics::EvalExample;
use crate::taxonomy::LabelPath;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<String>,
    pub dialog: String,
    pub corpus: String,
    pub index: usize,
    /// Per-level label names, `null` for `None`; the first entry is the gate
    /// level in the all-segments scenario.
    pub gold: Vec<Option<String>>,
    pub pred: Vec<Option<String>>,
    pub prob: f64,
    pub log_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dists: Option<Vec<Vec<f64>>>,
}

impl PredictionRecord {
    pub fn example(&self, space: &LabelSpace) -> Result<EvalExample> {
        Ok(EvalExample::new(
            space.path_from_names(&self.gold)?,
            space.path_from_names(&self.pred)?,
        ))
    }
}

pub fn write_records(records: &[PredictionRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("writing predictions", e))?;
    }
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Infers whether records carry the gate level from their path length.
pub fn records_gated(records: &[PredictionRecord], depth: usize) -> Result<bool> {
    let first = records.first().ok_or(Error::NoExamples)?;
    match first.gold.len() {
        n if n == depth => Ok(false),
        n if n == depth + 1 => Ok(true),
        n => Err(Error::InvalidPath(format!(
            "prediction paths have length {n}, taxonomy depth is {depth}"
        ))),
    }
}

pub fn examples(records: &[PredictionRecord], space: &LabelSpace) -> Result<Vec<EvalExample>> {
    records.iter().map(|r| r.example(space)).collect()
}

pub fn path_names(space: &LabelSpace, path: &LabelPath) -> Vec<Option<String>> {
    space.path_to_names(path)
}
