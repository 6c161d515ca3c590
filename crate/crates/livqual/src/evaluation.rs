//! Dataset manifests, error rates and the two-stage evaluation protocol.
//!
//! FLR is the percentage of fake samples misclassified as real, FFR the
//! percentage of real samples misclassified as fake, and
//! ACE = (FLR + FFR) / 2. Cross-validation fits on the development set and
//! evaluates on the test set, then exchanges the roles; the final ACE is the
//! mean of the two stages. Rates are kept at full precision and rounded only
//! when printed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{classify_batch, fit_lda, ClassifierError, Label, LabeledSamples};
use crate::textfmt::fmt_sig9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("decision and label lists differ in length: {decisions} vs {labels}")]
    LengthMismatch { decisions: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("single-class input: no {missing} samples, {present_rate} only ({value}%)")]
    SingleClassInput {
        missing: Label,
        present_rate: &'static str,
        value: f64,
    },
    #[error("sample {index} has no {attribute} attribute")]
    MissingAttribute { index: usize, attribute: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is empty")]
    Empty,
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate path {0:?}")]
    DuplicatePath(String),
}

/// Development/test membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// One manifest row. `material` and `procedure` are free-form attribute
/// strings (e.g. silicone/gelatin/playdoh, cooperative/non-cooperative) and
/// may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub label: Label,
    pub sensor: String,
    pub split: Split,
    pub material: Option<String>,
    pub procedure: Option<String>,
}

/// Validated dataset manifest.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_HEADER: &str = "path,label,sensor,split,material,procedure";

const KNOWN_MATERIALS: [&str; 3] = ["silicone", "gelatin", "playdoh"];
const KNOWN_PROCEDURES: [&str; 2] = ["cooperative", "non-cooperative"];

fn parse_attribute(
    raw: &str,
    known: &[&str],
    what: &str,
    line: usize,
) -> Result<Option<String>, ManifestError> {
    let v = raw.trim();
    if v.is_empty() || v == "-" || v == "\u{2014}" {
        return Ok(None);
    }
    let lower = v.to_ascii_lowercase();
    if known.contains(&lower.as_str()) {
        Ok(Some(lower))
    } else {
        Err(ManifestError::Malformed {
            line,
            message: format!("unknown {what} {v:?} (expected one of {known:?})"),
        })
    }
}

impl DatasetManifest {
    /// Loads and validates a manifest CSV with the declared header.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| ManifestError::Malformed {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let expected: Vec<&str> = MANIFEST_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(ManifestError::Malformed {
                line: 1,
                message: format!("header {got:?}, expected {expected:?}"),
            });
        }
        let mut rows = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| ManifestError::Malformed {
                line,
                message: e.to_string(),
            })?;
            if record.len() != expected.len() {
                return Err(ManifestError::Malformed {
                    line,
                    message: format!("{} fields, expected {}", record.len(), expected.len()),
                });
            }
            let path = record[0].trim().to_string();
            if path.is_empty() {
                return Err(ManifestError::Malformed {
                    line,
                    message: "empty path".into(),
                });
            }
            if !seen.insert(path.clone()) {
                return Err(ManifestError::DuplicatePath(path));
            }
            let label = Label::parse(&record[1]).ok_or_else(|| ManifestError::Malformed {
                line,
                message: format!("unknown label {:?}", &record[1]),
            })?;
            let sensor = record[2].trim().to_string();
            if sensor.is_empty() {
                return Err(ManifestError::Malformed {
                    line,
                    message: "empty sensor".into(),
                });
            }
            let split = Split::parse(&record[3]).ok_or_else(|| ManifestError::Malformed {
                line,
                message: format!("unknown split {:?}", &record[3]),
            })?;
            let material = parse_attribute(&record[4], &KNOWN_MATERIALS, "material", line)?;
            let procedure = parse_attribute(&record[5], &KNOWN_PROCEDURES, "procedure", line)?;
            rows.push(ManifestRow {
                path,
                label,
                sensor,
                split,
                material,
                procedure,
            });
        }
        if rows.is_empty() {
            return Err(ManifestError::Empty);
        }
        Ok(Self { rows })
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), ManifestError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.path,
                row.label,
                row.sensor,
                row.split.as_str(),
                row.material.as_deref().unwrap_or(""),
                row.procedure.as_deref().unwrap_or("")
            );
        }
        out
    }

    /// Distinct sensors named by the manifest.
    pub fn sensors(&self) -> Vec<String> {
        let mut sensors: Vec<String> = self.rows.iter().map(|r| r.sensor.clone()).collect();
        sensors.sort();
        sensors.dedup();
        sensors
    }

    /// Sample counts per (sensor, split, label), sorted.
    pub fn summary(&self) -> Vec<(String, Split, Label, usize)> {
        let mut counts: BTreeMap<(String, Split, String), usize> = BTreeMap::new();
        for row in &self.rows {
            *counts
                .entry((row.sensor.clone(), row.split, row.label.to_string()))
                .or_default() += 1;
        }
        counts
            .into_iter()
            .map(|((sensor, split, label), n)| {
                (sensor, split, Label::parse(&label).unwrap(), n)
            })
            .collect()
    }
}

/// Error rates plus the 2x2 confusion counts behind them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationReport {
    /// Percentage of fake samples misclassified as real.
    pub flr: f64,
    /// Percentage of real samples misclassified as fake.
    pub ffr: f64,
    /// (flr + ffr) / 2.
    pub ace: f64,
    pub real_as_real: usize,
    pub real_as_fake: usize,
    pub fake_as_fake: usize,
    pub fake_as_real: usize,
}

impl EvaluationReport {
    pub fn n_real(&self) -> usize {
        self.real_as_real + self.real_as_fake
    }

    pub fn n_fake(&self) -> usize {
        self.fake_as_fake + self.fake_as_real
    }

    pub fn total(&self) -> usize {
        self.n_real() + self.n_fake()
    }
}

/// Computes FLR/FFR/ACE from parallel decision and truth lists.
pub fn compute_rates(decisions: &[Label], truths: &[Label]) -> Result<EvaluationReport, EvalError> {
    if decisions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            decisions: decisions.len(),
            labels: truths.len(),
        });
    }
    if decisions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut report = EvaluationReport {
        flr: 0.0,
        ffr: 0.0,
        ace: 0.0,
        real_as_real: 0,
        real_as_fake: 0,
        fake_as_fake: 0,
        fake_as_real: 0,
    };
    for (&decision, &truth) in decisions.iter().zip(truths) {
        match (truth, decision) {
            (Label::Real, Label::Real) => report.real_as_real += 1,
            (Label::Real, Label::Fake) => report.real_as_fake += 1,
            (Label::Fake, Label::Fake) => report.fake_as_fake += 1,
            (Label::Fake, Label::Real) => report.fake_as_real += 1,
        }
    }
    let n_real = report.n_real();
    let n_fake = report.n_fake();
    if n_fake == 0 {
        let ffr = 100.0 * report.real_as_fake as f64 / n_real as f64;
        return Err(EvalError::SingleClassInput {
            missing: Label::Fake,
            present_rate: "FFR",
            value: ffr,
        });
    }
    if n_real == 0 {
        let flr = 100.0 * report.fake_as_real as f64 / n_fake as f64;
        return Err(EvalError::SingleClassInput {
            missing: Label::Real,
            present_rate: "FLR",
            value: flr,
        });
    }
    report.flr = 100.0 * report.fake_as_real as f64 / n_fake as f64;
    report.ffr = 100.0 * report.real_as_fake as f64 / n_real as f64;
    report.ace = (report.flr + report.ffr) / 2.0;
    Ok(report)
}

/// Two-way cross-validation outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossValReport {
    /// Trained on dev, evaluated on test.
    pub stage1: EvaluationReport,
    /// Trained on test, evaluated on dev.
    pub stage2: EvaluationReport,
    /// (stage1.ace + stage2.ace) / 2.
    pub final_ace: f64,
}

impl CrossValReport {
    /// Combines two stage reports; the final ACE is their exact mean.
    pub fn combine(stage1: EvaluationReport, stage2: EvaluationReport) -> Self {
        Self {
            stage1,
            stage2,
            final_ace: (stage1.ace + stage2.ace) / 2.0,
        }
    }
}

/// Fits on one set, evaluates on the other, in both directions. The subset
/// mask is fixed by the caller; no reselection happens here.
pub fn cross_validate(
    dev: &LabeledSamples,
    test: &LabeledSamples,
    subset_mask: u16,
    sensor: &str,
    epsilon_scale: f64,
) -> Result<CrossValReport, EvalError> {
    let stage = |train: &LabeledSamples, eval: &LabeledSamples| -> Result<EvaluationReport, EvalError> {
        let model = fit_lda(&train.vectors, &train.labels, subset_mask, sensor, epsilon_scale)?;
        let decisions: Vec<Label> = classify_batch(&model, &eval.vectors)?
            .into_iter()
            .map(|d| d.label)
            .collect();
        compute_rates(&decisions, &eval.labels)
    };
    let stage1 = stage(dev, test)?;
    let stage2 = stage(test, dev)?;
    Ok(CrossValReport::combine(stage1, stage2))
}

/// One attribute group of a breakdown report.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub group: String,
    pub report: EvaluationReport,
}

/// Breakdown result: per-group reports plus warnings for declared groups
/// that had no fake samples.
#[derive(Debug, Clone, Default)]
pub struct BreakdownReport {
    pub groups: Vec<GroupReport>,
    pub warnings: Vec<String>,
}

/// Per-group FLR against the shared real-sample FFR.
///
/// `attributes[i]` carries the group of sample `i`; every fake sample must
/// have one, real samples need none (the real set is shared across groups).
/// `declared` optionally names the expected groups so empty ones surface as
/// warnings instead of disappearing silently.
pub fn breakdown_report(
    decisions: &[Label],
    truths: &[Label],
    attributes: &[Option<String>],
    attribute_name: &str,
    declared: Option<&[String]>,
) -> Result<BreakdownReport, EvalError> {
    if decisions.len() != truths.len() || truths.len() != attributes.len() {
        return Err(EvalError::LengthMismatch {
            decisions: decisions.len(),
            labels: truths.len(),
        });
    }
    if decisions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut real_as_real = 0usize;
    let mut real_as_fake = 0usize;
    let mut per_group: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    if let Some(declared) = declared {
        for g in declared {
            per_group.entry(g.clone()).or_default();
        }
    }
    for (i, ((&decision, &truth), attribute)) in
        decisions.iter().zip(truths).zip(attributes).enumerate()
    {
        match truth {
            Label::Real => match decision {
                Label::Real => real_as_real += 1,
                Label::Fake => real_as_fake += 1,
            },
            Label::Fake => {
                let group = attribute.as_ref().ok_or_else(|| EvalError::MissingAttribute {
                    index: i,
                    attribute: attribute_name.to_string(),
                })?;
                let cell = per_group.entry(group.clone()).or_default();
                match decision {
                    Label::Fake => cell.0 += 1,
                    Label::Real => cell.1 += 1,
                }
            }
        }
    }
    let n_real = real_as_real + real_as_fake;
    if n_real == 0 {
        return Err(EvalError::SingleClassInput {
            missing: Label::Real,
            present_rate: "FLR",
            value: f64::NAN,
        });
    }
    let ffr = 100.0 * real_as_fake as f64 / n_real as f64;

    let mut out = BreakdownReport::default();
    for (group, (fake_as_fake, fake_as_real)) in per_group {
        let n_fake = fake_as_fake + fake_as_real;
        if n_fake == 0 {
            out.warnings.push(format!(
                "{attribute_name} group {group:?} has no fake samples; omitted"
            ));
            continue;
        }
        let flr = 100.0 * fake_as_real as f64 / n_fake as f64;
        out.groups.push(GroupReport {
            group,
            report: EvaluationReport {
                flr,
                ffr,
                ace: (flr + ffr) / 2.0,
                real_as_real,
                real_as_fake,
                fake_as_fake,
                fake_as_real,
            },
        });
    }
    Ok(out)
}

/// Machine-readable report rows: `sensor,stage,flr,ffr,ace`.
pub fn report_csv(rows: &[(String, String, EvaluationReport)]) -> String {
    let mut out = String::from("sensor,stage,flr,ffr,ace\n");
    for (sensor, stage, report) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            sensor,
            stage,
            fmt_sig9(report.flr),
            fmt_sig9(report.ffr),
            fmt_sig9(report.ace)
        );
    }
    out
}

/// Human-readable one-line summary, percentages rounded at print time.
pub fn format_report_line(report: &EvaluationReport) -> String {
    format!(
        "FLR {:.1}%  FFR {:.1}%  ACE {:.1}%  ({} real, {} fake)",
        report.flr,
        report.ffr,
        report.ace,
        report.n_real(),
        report.n_fake()
    )
}
