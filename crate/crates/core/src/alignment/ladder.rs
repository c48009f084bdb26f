//! Quality ladders and their CSV fixture format.
//!
//! Header: `model_id,ladder_id,control_value,<metric columns...>[,downstream_score]`.
//! Empty metric cells mean "not measured"; an empty score cell means no score.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCORE_COLUMN: &str = "downstream_score";
const ID_COLUMNS: [&str; 3] = ["model_id", "ladder_id", "control_value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub model_id: String,
    pub ladder_id: String,
    /// Checkpoint rank or sampling-step count.
    pub control_value: f64,
    /// Metric name → value, in column order.
    pub metric_values: Vec<(String, f64)>,
    pub downstream_score: Option<f64>,
    /// e.g. "fraction" or "percent"; informational only.
    #[serde(default)]
    pub score_unit: Option<String>,
}

impl LadderEntry {
    pub fn new(model_id: impl Into<String>, ladder_id: impl Into<String>, control_value: f64) -> Self {
        LadderEntry {
            model_id: model_id.into(),
            ladder_id: ladder_id.into(),
            control_value,
            metric_values: Vec::new(),
            downstream_score: None,
            score_unit: None,
        }
    }

    pub fn with_metric(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set_metric(name, value);
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.downstream_score = Some(score);
        self
    }

    pub fn set_metric(&mut self, name: impl Into<String>, value: f64) {
        let name = name.into();
        match self.metric_values.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.metric_values.push((name, value)),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metric_values
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }
}

/// Metric names across entries, in first-seen column order.
pub fn metric_names(entries: &[LadderEntry]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for e in entries {
        for (n, _) in &e.metric_values {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    names
}

/// Splits entries by `ladder_id`, preserving first-seen order.
pub fn group_by_ladder(entries: &[LadderEntry]) -> Vec<(String, Vec<LadderEntry>)> {
    let mut groups: Vec<(String, Vec<LadderEntry>)> = Vec::new();
    for e in entries {
        match groups.iter_mut().find(|(id, _)| *id == e.ladder_id) {
            Some((_, g)) => g.push(e.clone()),
            None => groups.push((e.ladder_id.clone(), vec![e.clone()])),
        }
    }
    groups
}

fn parse_number(cell: &str, row: usize, column: usize) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("not a number: {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column,
            message: format!("non-finite value {cell:?}"),
        });
    }
    Ok(v)
}

pub fn parse_ladder_csv(text: &str) -> Result<Vec<LadderEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[..3] != ID_COLUMNS {
        return Err(Error::Format(format!(
            "ladder header must start with {}, got {:?}",
            ID_COLUMNS.join(","),
            header
        )));
    }
    let mut entries = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 2;
        let mut e = LadderEntry::new(&record[0], &record[1], parse_number(&record[2], row, 3)?);
        if e.model_id.is_empty() {
            return Err(Error::Format(format!("row {row}: empty model_id")));
        }
        for (c, name) in header.iter().enumerate().skip(3) {
            let cell = &record[c];
            if cell.is_empty() {
                continue;
            }
            let v = parse_number(cell, row, c + 1)?;
            if name == SCORE_COLUMN {
                e.downstream_score = Some(v);
            } else {
                e.metric_values.push((name.clone(), v));
            }
        }
        entries.push(e);
    }
    if entries.is_empty() {
        return Err(Error::Format("ladder file has no entries".into()));
    }
    Ok(entries)
}

pub fn read_ladder_csv(path: impl AsRef<Path>) -> Result<Vec<LadderEntry>> {
    parse_ladder_csv(&std::fs::read_to_string(path)?)
}

/// Nine significant digits, shortest form.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Writes entries in the fixture format. Metric columns follow first-seen order.
pub fn write_ladder_csv(entries: &[LadderEntry]) -> String {
    let names = metric_names(entries);
    let with_score = entries.iter().any(|e| e.downstream_score.is_some());
    let mut out = ID_COLUMNS.join(",");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    if with_score {
        out.push(',');
        out.push_str(SCORE_COLUMN);
    }
    out.push('\n');
    for e in entries {
        out.push_str(&format!(
            "{},{},{}",
            e.model_id,
            e.ladder_id,
            format_sig9(e.control_value)
        ));
        for n in &names {
            out.push(',');
            if let Some(v) = e.metric(n) {
                out.push_str(&format_sig9(v));
            }
        }
        if with_score {
            out.push(',');
            if let Some(s) = e.downstream_score {
                out.push_str(&format_sig9(s));
            }
        }
        out.push('\n');
    }
    out
}
