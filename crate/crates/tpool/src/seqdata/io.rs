//! On-disk formats for sequences, labels and folds.
//!
//! * CSV features: one frame per line, `d` comma-separated reals, `.`
//!   decimal separator, no header.
//! * Binary features: magic `TPF1`, two little-endian u32 (`T`, `d`), then
//!   `T·d` little-endian IEEE-754 f32 values, row-major.
//! * Labels: one decimal integer per line, `T` lines.
//! * Folds: one line per fold, comma-separated item indices.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{FeatureSequence, LabelSequence};
use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 4] = b"TPF1";

/// Feature file encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureFormat::Csv => "csv",
            FeatureFormat::Binary => "binary",
        }
    }
}

impl std::str::FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "binary" => Ok(FeatureFormat::Binary),
            other => Err(Error::Config(format!("unknown feature format '{other}'"))),
        }
    }
}

/// Load a `T×d` feature matrix from disk.
pub fn load_features(path: &Path, format: FeatureFormat) -> Result<FeatureSequence> {
    match format {
        FeatureFormat::Csv => load_features_csv(path),
        FeatureFormat::Binary => load_features_binary(path),
    }
}

/// Write a feature matrix in the given format. CSV uses the shortest
/// decimal representation that round-trips; binary stores f32 payloads.
pub fn store_features(path: &Path, x: &FeatureSequence, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Csv => store_features_csv(path, x),
        FeatureFormat::Binary => store_features_binary(path, x),
    }
}

fn load_features_csv(path: &Path) -> Result<FeatureSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: row {lineno}: '{field}' is not a real number",
                    path.display()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {lineno}: non-finite value {v}",
                    path.display()
                )));
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse(format!(
                    "{}: row {lineno} has {} fields, expected {w}",
                    path.display(),
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
    }
    let d = width.ok_or_else(|| Error::Parse(format!("{}: empty feature file", path.display())))?;
    let t = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let frames = Array2::from_shape_vec((t, d), flat)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    FeatureSequence::new(frames)
}

fn store_features_csv(path: &Path, x: &FeatureSequence) -> Result<()> {
    let mut out = String::new();
    for row in x.frames().rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_features_binary(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 12 {
        return Err(Error::Parse(format!(
            "{}: too short for a binary feature file",
            path.display()
        )));
    }
    if &bytes[0..4] != BINARY_MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad magic, expected TPF1",
            path.display()
        )));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Parse(format!("{}: header overflow", path.display())))?;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "{}: payload is {} bytes, header {t}x{d} implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let mut flat = Vec::with_capacity(t * d);
    for chunk in bytes[12..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "{}: non-finite value in payload",
                path.display()
            )));
        }
        flat.push(v);
    }
    let frames = Array2::from_shape_vec((t, d), flat)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    FeatureSequence::new(frames)
}

fn store_features_binary(path: &Path, x: &FeatureSequence) -> Result<()> {
    let (t, d) = x.frames().dim();
    let mut bytes = Vec::with_capacity(12 + t * d * 4);
    bytes.extend_from_slice(BINARY_MAGIC);
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for v in x.frames().iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load frame labels, validating each against the class count.
pub fn load_labels(path: &Path, num_classes: usize) -> Result<LabelSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let label: usize = line.trim().parse().map_err(|_| {
            Error::Parse(format!(
                "{}: line {lineno}: '{line}' is not a label",
                path.display()
            ))
        })?;
        if label >= num_classes {
            return Err(Error::Data(format!(
                "{}: line {lineno}: label {label} >= {num_classes} classes",
                path.display()
            )));
        }
        labels.push(label);
    }
    LabelSequence::new(labels, num_classes)
}

pub fn store_labels(path: &Path, y: &LabelSequence) -> Result<()> {
    let mut out = String::new();
    for l in y.labels() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load a fold partition; one comma-separated line of item indices per
/// fold, blank line meaning an empty fold.
pub fn load_folds(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut folds = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            folds.push(Vec::new());
            continue;
        }
        let mut fold = Vec::new();
        for field in trimmed.split(',') {
            let idx: usize = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: fold {lineno}: '{field}' is not an item index",
                    path.display()
                ))
            })?;
            fold.push(idx);
        }
        folds.push(fold);
    }
    Ok(folds)
}

pub fn store_folds(path: &Path, folds: &[Vec<usize>]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for fold in folds {
        let line: Vec<String> = fold.iter().map(|i| i.to_string()).collect();
        writeln!(file, "{}", line.join(","))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}
