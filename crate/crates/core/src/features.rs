//! Feature matrices and the FDBF1 container.
//!
//! An FDBF1 file is laid out as follows (all integers little-endian):
//!
//! | offset | size | field                                        |
//! |--------|------|----------------------------------------------|
//! | 0      | 5    | magic `b"FDBF1"`                             |
//! | 5      | 8    | `n` rows (u64)                               |
//! | 13     | 8    | `d` columns (u64)                            |
//! | 21     | 1    | dtype code, `0` = float32                    |
//! | 22     | 8    | FNV-1a 64 checksum of the payload bytes      |
//! | 30     | 4    | metadata length in bytes (u32)               |
//! | 34     | m    | metadata, UTF-8 JSON with sorted keys        |
//! | 34 + m | 4·n·d| payload, row-major float32                   |
//!
//! Nothing may follow the payload.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"FDBF1";
pub const DTYPE_F32: u8 = 0;
const HEADER_LEN: usize = 5 + 8 + 8 + 1 + 8 + 4;

/// Which side of the evaluation protocol a feature set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generated,
    RealTest,
    RealTrain,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Generated => "generated",
            Role::RealTest => "real_test",
            Role::RealTrain => "real_train",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generated" => Ok(Role::Generated),
            "real_test" => Ok(Role::RealTest),
            "real_train" => Ok(Role::RealTrain),
            other => Err(Error::Validation(format!("unknown role {other:?}"))),
        }
    }
}

/// Image preprocessing applied before feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preprocessing {
    #[serde(rename = "legacy-resize")]
    LegacyResize,
    #[serde(rename = "clean-resize")]
    CleanResize,
    #[serde(rename = "none")]
    None,
}

impl std::str::FromStr for Preprocessing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legacy-resize" => Ok(Preprocessing::LegacyResize),
            "clean-resize" => Ok(Preprocessing::CleanResize),
            "none" => Ok(Preprocessing::None),
            other => Err(Error::Validation(format!(
                "unknown preprocessing tag {other:?}"
            ))),
        }
    }
}

/// Provenance carried alongside every feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub extractor_id: String,
    pub preprocessing_tag: Preprocessing,
    pub role: Role,
    pub source_id: String,
}

impl FeatureMeta {
    pub fn new(role: Role) -> Self {
        FeatureMeta {
            extractor_id: "unknown".to_string(),
            preprocessing_tag: Preprocessing::None,
            role,
            source_id: String::new(),
        }
    }

    pub fn with_extractor(mut self, extractor_id: impl Into<String>) -> Self {
        self.extractor_id = extractor_id.into();
        self
    }

    pub fn with_source(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }
}

/// An immutable n×d matrix of finite float32 features plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: Vec<f32>,
    n: usize,
    d: usize,
    meta: FeatureMeta,
}

impl FeatureSet {
    pub fn new(data: Vec<f32>, n: usize, d: usize, meta: FeatureMeta) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Validation(format!(
                "feature matrix must be non-empty, got {n}x{d}"
            )));
        }
        if n.checked_mul(d) != Some(data.len()) {
            return Err(Error::Validation(format!(
                "{} values do not form a {n}x{d} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(FeatureSet { data, n, d, meta })
    }

    /// Builds a feature set from f64 values, rounding to float32.
    pub fn from_f64(values: &[f64], n: usize, d: usize, meta: FeatureMeta) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect(), n, d, meta)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], meta: FeatureMeta) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::Validation(format!(
                    "row {i} has {} values, expected {d}",
                    row.len()
                )));
            }
            data.extend(row.iter().map(|&v| v as f32));
        }
        Self::new(data, rows.len(), d, meta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn meta(&self) -> &FeatureMeta {
        &self.meta
    }

    pub fn role(&self) -> Role {
        self.meta.role
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    /// Row-major copy widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// A copy holding the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Validation(format!(
                    "row index {i} out of range for {} rows",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, indices.len(), self.d, self.meta.clone())
    }

    pub fn with_meta(mut self, meta: FeatureMeta) -> Self {
        self.meta = meta;
        self
    }
}

/// FNV-1a, 64-bit. A single changed byte always changes the digest, since
/// each step is a bijection on the running state.
pub fn payload_checksum(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Serializes a feature set into FDBF1 bytes.
pub fn encode_feature_set(fs: &FeatureSet) -> Result<Vec<u8>> {
    if let Some(pos) = fs.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite value at index {pos}")));
    }
    let meta = serde_json::to_vec(&serde_json::to_value(&fs.meta)?)?;
    let meta_len = u32::try_from(meta.len())
        .map_err(|_| Error::Validation("metadata block exceeds 4 GiB".into()))?;

    let mut payload = Vec::with_capacity(fs.data.len() * 4);
    for v in &fs.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }

    let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(fs.n as u64).to_le_bytes());
    out.extend_from_slice(&(fs.d as u64).to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&payload_checksum(&payload).to_le_bytes());
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Corruption(format!("file truncated while reading {what}")))?;
    let slice = &bytes[*at..end];
    *at = end;
    Ok(slice)
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8-byte slice"))
}

/// Parses FDBF1 bytes, verifying layout and checksum.
pub fn decode_feature_set(bytes: &[u8]) -> Result<FeatureSet> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("bad magic, not an FDBF1 file".into()));
    }
    let mut at = MAGIC.len();
    let n = le_u64(take(bytes, &mut at, 8, "row count")?);
    let d = le_u64(take(bytes, &mut at, 8, "column count")?);
    let dtype = take(bytes, &mut at, 1, "dtype code")?[0];
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    let checksum = le_u64(take(bytes, &mut at, 8, "checksum")?);
    let meta_len = u32::from_le_bytes(
        take(bytes, &mut at, 4, "metadata length")?
            .try_into()
            .expect("4-byte slice"),
    ) as usize;
    let meta_bytes = take(bytes, &mut at, meta_len, "metadata")?;
    let meta: FeatureMeta = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::Format(format!("invalid metadata block: {e}")))?;

    if n == 0 || d == 0 {
        return Err(Error::Format(format!("empty matrix declared ({n}x{d})")));
    }
    let (n, d) = (n as usize, d as usize);
    let payload_len = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("declared shape {n}x{d} overflows")))?;
    let payload = &bytes[at..];
    if payload.len() != payload_len {
        return Err(Error::Corruption(format!(
            "payload is {} bytes, header declares {payload_len}",
            payload.len()
        )));
    }
    let actual = payload_checksum(payload);
    if actual != checksum {
        return Err(Error::Corruption(format!(
            "checksum mismatch: header {checksum:016x}, payload {actual:016x}"
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    FeatureSet::new(data, n, d, meta).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_feature_set(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_feature_set(fs)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_feature_set(path: impl AsRef<Path>) -> Result<FeatureSet> {
    decode_feature_set(&fs::read(path)?)
}

/// Parses headerless numeric CSV text, one feature vector per line.
pub fn parse_csv(text: &str, meta: FeatureMeta) -> Result<FeatureSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let width = *d.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::Format(format!(
                "ragged row {}: {} columns, expected {width}",
                row + 1,
                record.len()
            )));
        }
        for (column, cell) in record.iter().enumerate() {
            let v: f32 = cell.parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: column + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            data.push(v);
        }
        n += 1;
    }
    FeatureSet::new(data, n, d.unwrap_or(0), meta)
}

pub fn import_csv(path: impl AsRef<Path>, meta: FeatureMeta) -> Result<FeatureSet> {
    parse_csv(&fs::read_to_string(path)?, meta)
}
