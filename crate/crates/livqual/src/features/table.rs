//! Feature CSV format shared by the extraction, selection, training and
//! evaluation stages.
//!
//! Header: `path,label,sensor,split,q_ocl,q_e,q_loq,q_cof,q_mean,q_std,
//! q_lcs1,q_lcs2,q_a,q_var`. Floats are printed with 9 significant digits.
//! Label and split may be empty for images extracted outside a manifest.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::classifier::{Label, LabeledSamples};
use crate::evaluation::Split;
use crate::features::{QualityVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::textfmt::fmt_sig9;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("feature table line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("feature table is empty")]
    Empty,
    #[error("row {index} ({path}) has no label")]
    MissingLabel { index: usize, path: String },
}

/// One extracted image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub path: String,
    pub label: Option<Label>,
    pub sensor: String,
    pub split: Option<Split>,
    pub vector: QualityVector,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

pub fn feature_csv_header() -> String {
    let mut header = String::from("path,label,sensor,split");
    for name in FEATURE_NAMES {
        header.push(',');
        header.push_str(name);
    }
    header
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut out = feature_csv_header();
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{}",
                row.path,
                row.label.map(|l| l.as_str()).unwrap_or(""),
                row.sensor,
                row.split.map(|s| s.as_str()).unwrap_or("")
            );
            for v in row.vector.as_array() {
                out.push(',');
                out.push_str(&fmt_sig9(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), TableError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| TableError::Malformed {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let expected = feature_csv_header();
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != expected {
            return Err(TableError::Malformed {
                line: 1,
                message: format!("header {got:?}, expected {expected:?}"),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| TableError::Malformed {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 4 + FEATURE_COUNT {
                return Err(TableError::Malformed {
                    line,
                    message: format!("{} fields, expected {}", record.len(), 4 + FEATURE_COUNT),
                });
            }
            let label = match record[1].trim() {
                "" => None,
                s => Some(Label::parse(s).ok_or_else(|| TableError::Malformed {
                    line,
                    message: format!("unknown label {s:?}"),
                })?),
            };
            let split = match record[3].trim() {
                "" => None,
                s => Some(Split::parse(s).ok_or_else(|| TableError::Malformed {
                    line,
                    message: format!("unknown split {s:?}"),
                })?),
            };
            let mut values = [0.0f64; FEATURE_COUNT];
            for (k, value) in values.iter_mut().enumerate() {
                *value = record[4 + k]
                    .trim()
                    .parse()
                    .map_err(|_| TableError::Malformed {
                        line,
                        message: format!("bad {} value {:?}", FEATURE_NAMES[k], &record[4 + k]),
                    })?;
            }
            rows.push(FeatureRow {
                path: record[0].to_string(),
                label,
                sensor: record[2].to_string(),
                split,
                vector: QualityVector::from_array(values),
            });
        }
        if rows.is_empty() {
            return Err(TableError::Empty);
        }
        Ok(Self { rows })
    }

    /// Rows for one sensor (all rows when `sensor` is `None`).
    pub fn filter_sensor(&self, sensor: Option<&str>) -> Self {
        match sensor {
            None => self.clone(),
            Some(s) => Self {
                rows: self.rows.iter().filter(|r| r.sensor == s).cloned().collect(),
            },
        }
    }

    /// Labeled samples for one split. Rows without a split tag are included
    /// only when `split` is `None`; rows without a label are an error.
    pub fn labeled_samples(&self, split: Option<Split>) -> Result<LabeledSamples, TableError> {
        let mut samples = LabeledSamples::default();
        for (index, row) in self.rows.iter().enumerate() {
            if split.is_some() && row.split != split {
                continue;
            }
            let label = row.label.ok_or_else(|| TableError::MissingLabel {
                index,
                path: row.path.clone(),
            })?;
            samples.push(row.vector, label);
        }
        Ok(samples)
    }

    /// True when any row carries a split tag.
    pub fn has_splits(&self) -> bool {
        self.rows.iter().any(|r| r.split.is_some())
    }
}
