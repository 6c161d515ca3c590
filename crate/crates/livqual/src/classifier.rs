//! Two-class LDA over a selected feature subset.
//!
//! Training z-scores the selected dimensions with statistics from the
//! training data, fits per-class means and a pooled within-class covariance
//! (regularized with epsilon = scale * trace / d), and classification
//! evaluates the linear discriminant with equal priors. A tied score of
//! exactly zero resolves to fake.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::features::{QualityVector, FEATURE_COUNT};
use crate::linalg::{cholesky, cholesky_solve, dot};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("need at least {needed} samples per class, got {got} for class {label}")]
    InsufficientSamples {
        label: Label,
        got: usize,
        needed: usize,
    },
    #[error("feature subset mask is empty")]
    EmptyMask,
    #[error("subset mask {0:#x} has bits outside the 10-feature range")]
    MaskOutOfRange(u16),
    #[error("sample and label counts differ: {samples} vs {labels}")]
    LengthMismatch { samples: usize, labels: usize },
    #[error("model dimension mismatch: {0}")]
    ModelDimensionMismatch(String),
    #[error("pooled covariance is not positive definite after regularization")]
    SingularCovariance,
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error("unsupported model schema version {0}")]
    SchemaVersion(u32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ground-truth or predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Some(Label::Real),
            "fake" => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification outcome: signed discriminant score, positive means real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LivenessDecision {
    pub label: Label,
    pub score: f64,
}

/// Labeled feature vectors used for training and evaluation.
#[derive(Debug, Clone, Default)]
pub struct LabeledSamples {
    pub vectors: Vec<QualityVector>,
    pub labels: Vec<Label>,
}

impl LabeledSamples {
    pub fn push(&mut self, vector: QualityVector, label: Label) {
        self.vectors.push(vector);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Number of selected dimensions in a 10-bit subset mask.
pub fn mask_cardinality(mask: u16) -> usize {
    (mask & 0x3ff).count_ones() as usize
}

/// Ascending feature indices selected by the mask.
pub fn mask_indices(mask: u16) -> Vec<usize> {
    (0..FEATURE_COUNT).filter(|i| mask & (1 << i) != 0).collect()
}

/// Subset mask rendered as a bit string in feature order, index 0 leftmost.
pub fn mask_to_bits(mask: u16) -> String {
    (0..FEATURE_COUNT)
        .map(|i| if mask & (1 << i) != 0 { '1' } else { '0' })
        .collect()
}

/// Parses a 10-character bit string (feature order) or a plain integer.
pub fn mask_from_bits(s: &str) -> Option<u16> {
    let s = s.trim();
    if s.len() == FEATURE_COUNT && s.chars().all(|c| c == '0' || c == '1') {
        let mut mask = 0u16;
        for (i, c) in s.chars().enumerate() {
            if c == '1' {
                mask |= 1 << i;
            }
        }
        return Some(mask);
    }
    s.parse::<u16>().ok().filter(|&m| m > 0 && m < 1 << FEATURE_COUNT)
}

/// Trained LDA model for one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub sensor: String,
    pub subset_mask: u16,
    /// Per selected dimension z-score parameters from the training data.
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    /// Selected dimensions whose training variance was zero (std forced to 1).
    pub zero_variance_dims: Vec<usize>,
    /// Class means in normalized space.
    pub mean_real: Vec<f64>,
    pub mean_fake: Vec<f64>,
    /// Pooled within-class covariance, row-major, regularized.
    pub covariance: Vec<f64>,
    pub epsilon: f64,
}

const MIN_PER_CLASS: usize = 2;

/// Fits the classifier on the selected feature subset.
pub fn fit_lda(
    vectors: &[QualityVector],
    labels: &[Label],
    subset_mask: u16,
    sensor: &str,
    epsilon_scale: f64,
) -> Result<LdaModel, ClassifierError> {
    if vectors.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            samples: vectors.len(),
            labels: labels.len(),
        });
    }
    if subset_mask == 0 {
        return Err(ClassifierError::EmptyMask);
    }
    if subset_mask >= 1 << FEATURE_COUNT {
        return Err(ClassifierError::MaskOutOfRange(subset_mask));
    }
    for &label in [Label::Real, Label::Fake].iter() {
        let got = labels.iter().filter(|&&l| l == label).count();
        if got < MIN_PER_CLASS {
            return Err(ClassifierError::InsufficientSamples {
                label,
                got,
                needed: MIN_PER_CLASS,
            });
        }
    }

    let indices = mask_indices(subset_mask);
    let dim = indices.len();
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let full = v.as_array();
            indices.iter().map(|&i| full[i]).collect()
        })
        .collect();

    // z-score parameters over the full training set, population variance.
    let mut norm_mean = vec![0.0f64; dim];
    for row in &rows {
        for d in 0..dim {
            norm_mean[d] += row[d];
        }
    }
    for m in &mut norm_mean {
        *m /= n as f64;
    }
    let mut norm_std = vec![0.0f64; dim];
    for row in &rows {
        for d in 0..dim {
            let c = row[d] - norm_mean[d];
            norm_std[d] += c * c;
        }
    }
    let mut zero_variance_dims = Vec::new();
    for d in 0..dim {
        let std = (norm_std[d] / n as f64).sqrt();
        if std > 1e-12 {
            norm_std[d] = std;
        } else {
            norm_std[d] = 1.0;
            zero_variance_dims.push(indices[d]);
        }
    }

    let normalized: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            (0..dim)
                .map(|d| (row[d] - norm_mean[d]) / norm_std[d])
                .collect()
        })
        .collect();

    let mut mean_real = vec![0.0f64; dim];
    let mut mean_fake = vec![0.0f64; dim];
    let mut n_real = 0usize;
    let mut n_fake = 0usize;
    for (row, &label) in normalized.iter().zip(labels) {
        let (mean, count) = match label {
            Label::Real => (&mut mean_real, &mut n_real),
            Label::Fake => (&mut mean_fake, &mut n_fake),
        };
        for d in 0..dim {
            mean[d] += row[d];
        }
        *count += 1;
    }
    for m in &mut mean_real {
        *m /= n_real as f64;
    }
    for m in &mut mean_fake {
        *m /= n_fake as f64;
    }

    // Pooled within-class scatter, accumulated per class in sample order.
    let mut scatter_real = vec![0.0f64; dim * dim];
    let mut scatter_fake = vec![0.0f64; dim * dim];
    for (row, &label) in normalized.iter().zip(labels) {
        let (mean, scatter) = match label {
            Label::Real => (&mean_real, &mut scatter_real),
            Label::Fake => (&mean_fake, &mut scatter_fake),
        };
        for i in 0..dim {
            let ci = row[i] - mean[i];
            for j in 0..dim {
                scatter[i * dim + j] += ci * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n_real + n_fake - 2) as f64;
    let mut covariance = vec![0.0f64; dim * dim];
    for i in 0..dim * dim {
        covariance[i] = (scatter_real[i] + scatter_fake[i]) / denom;
    }

    let trace: f64 = (0..dim).map(|i| covariance[i * dim + i]).sum();
    // Degenerate all-identical data leaves a zero trace; keep the matrix
    // positive definite so scores stay defined (they all tie at zero).
    let epsilon = if trace > 0.0 {
        epsilon_scale * trace / dim as f64
    } else {
        epsilon_scale
    };
    for i in 0..dim {
        covariance[i * dim + i] += epsilon;
    }

    let model = LdaModel {
        sensor: sensor.to_string(),
        subset_mask,
        norm_mean,
        norm_std,
        zero_variance_dims,
        mean_real,
        mean_fake,
        covariance,
        epsilon,
    };
    // Invariant check: regularized covariance must factor.
    if cholesky(&model.covariance, dim).is_none() {
        return Err(ClassifierError::SingularCovariance);
    }
    Ok(model)
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        mask_cardinality(self.subset_mask)
    }

    /// Discriminant weights and bias: w = Sigma^-1 (mu_real - mu_fake),
    /// b = -(mu_real + mu_fake)^T w / 2.
    pub fn discriminant(&self) -> Result<(Vec<f64>, f64), ClassifierError> {
        let dim = self.dim();
        let lower =
            cholesky(&self.covariance, dim).ok_or(ClassifierError::SingularCovariance)?;
        let diff: Vec<f64> = (0..dim)
            .map(|d| self.mean_real[d] - self.mean_fake[d])
            .collect();
        let weights = cholesky_solve(&lower, dim, &diff);
        let mid: Vec<f64> = (0..dim)
            .map(|d| self.mean_real[d] + self.mean_fake[d])
            .collect();
        let bias = -0.5 * dot(&mid, &weights);
        Ok((weights, bias))
    }

    /// Consistency of the stored arrays with the subset mask.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let dim = self.dim();
        if dim == 0 {
            return Err(ClassifierError::EmptyMask);
        }
        if self.subset_mask >= 1 << FEATURE_COUNT {
            return Err(ClassifierError::MaskOutOfRange(self.subset_mask));
        }
        let check = |name: &str, len: usize, expected: usize| {
            if len != expected {
                Err(ClassifierError::ModelDimensionMismatch(format!(
                    "{name} has {len} entries, expected {expected}"
                )))
            } else {
                Ok(())
            }
        };
        check("norm_mean", self.norm_mean.len(), dim)?;
        check("norm_std", self.norm_std.len(), dim)?;
        check("mean_real", self.mean_real.len(), dim)?;
        check("mean_fake", self.mean_fake.len(), dim)?;
        check("covariance", self.covariance.len(), dim * dim)?;
        if self.norm_std.iter().any(|&s| s <= 0.0 || s.is_nan()) {
            return Err(ClassifierError::ModelDimensionMismatch(
                "normalization stds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Classifies one feature vector. Score > 0 means real; ties go to fake.
pub fn classify(model: &LdaModel, vector: &QualityVector) -> Result<LivenessDecision, ClassifierError> {
    model.validate()?;
    let (weights, bias) = model.discriminant()?;
    let indices = mask_indices(model.subset_mask);
    let full = vector.as_array();
    let mut score = bias;
    for (d, &i) in indices.iter().enumerate() {
        let z = (full[i] - model.norm_mean[d]) / model.norm_std[d];
        score += weights[d] * z;
    }
    let label = if score > 0.0 { Label::Real } else { Label::Fake };
    Ok(LivenessDecision { label, score })
}

/// Classifies a batch against one model, reusing the discriminant.
pub fn classify_batch(
    model: &LdaModel,
    vectors: &[QualityVector],
) -> Result<Vec<LivenessDecision>, ClassifierError> {
    model.validate()?;
    let (weights, bias) = model.discriminant()?;
    let indices = mask_indices(model.subset_mask);
    Ok(vectors
        .iter()
        .map(|vector| {
            let full = vector.as_array();
            let mut score = bias;
            for (d, &i) in indices.iter().enumerate() {
                let z = (full[i] - model.norm_mean[d]) / model.norm_std[d];
                score += weights[d] * z;
            }
            let label = if score > 0.0 { Label::Real } else { Label::Fake };
            LivenessDecision { label, score }
        })
        .collect())
}

const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NormalizationFile {
    mean: Vec<f64>,
    std: Vec<f64>,
    zero_variance: Vec<usize>,
}

/// On-disk model document: versioned JSON with the extraction config
/// embedded so feature extraction is reproducible from the model alone.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    sensor: String,
    subset_mask: String,
    normalization: NormalizationFile,
    mean_real: Vec<f64>,
    mean_fake: Vec<f64>,
    covariance: Vec<f64>,
    epsilon: f64,
    config: Config,
}

pub fn save_model<P: AsRef<Path>>(
    model: &LdaModel,
    config: &Config,
    path: P,
) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        sensor: model.sensor.clone(),
        subset_mask: mask_to_bits(model.subset_mask),
        normalization: NormalizationFile {
            mean: model.norm_mean.clone(),
            std: model.norm_std.clone(),
            zero_variance: model.zero_variance_dims.clone(),
        },
        mean_real: model.mean_real.clone(),
        mean_fake: model.mean_fake.clone(),
        covariance: model.covariance.clone(),
        epsilon: model.epsilon,
        config: config.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| ClassifierError::MalformedModel(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<(LdaModel, Config), ClassifierError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| ClassifierError::MalformedModel(e.to_string()))?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(ClassifierError::SchemaVersion(file.schema_version));
    }
    let subset_mask = mask_from_bits(&file.subset_mask).ok_or_else(|| {
        ClassifierError::MalformedModel(format!("bad subset_mask {:?}", file.subset_mask))
    })?;
    let model = LdaModel {
        sensor: file.sensor,
        subset_mask,
        norm_mean: file.normalization.mean,
        norm_std: file.normalization.std,
        zero_variance_dims: file.normalization.zero_variance,
        mean_real: file.mean_real,
        mean_fake: file.mean_fake,
        covariance: file.covariance,
        epsilon: file.epsilon,
    };
    model.validate()?;
    Ok((model, file.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector_1d(v: f64) -> QualityVector {
        let mut a = [0.0; FEATURE_COUNT];
        a[0] = v;
        QualityVector::from_array(a)
    }

    fn simple_1d_set() -> (Vec<QualityVector>, Vec<Label>) {
        let vectors = vec![
            vector_1d(0.9),
            vector_1d(1.0),
            vector_1d(1.1),
            vector_1d(-0.1),
            vector_1d(0.0),
            vector_1d(0.1),
        ];
        let labels = vec![
            Label::Real,
            Label::Real,
            Label::Real,
            Label::Fake,
            Label::Fake,
            Label::Fake,
        ];
        (vectors, labels)
    }

    #[test]
    fn separable_1d_classifies_all_training_points() {
        let (vectors, labels) = simple_1d_set();
        let model = fit_lda(&vectors, &labels, 0b1, "test", 1e-6).unwrap();
        for (v, &l) in vectors.iter().zip(&labels) {
            assert_eq!(classify(&model, v).unwrap().label, l);
        }
        // Boundary at the midpoint 0.5 of the raw feature.
        let boundary = classify(&model, &vector_1d(0.5)).unwrap();
        assert!(boundary.score.abs() < 1e-9);
        let real_side = classify(&model, &vector_1d(0.51)).unwrap();
        assert_eq!(real_side.label, Label::Real);
    }

    #[test]
    fn duplicated_training_set_gives_identical_model() {
        let (vectors, labels) = simple_1d_set();
        let mut doubled_v = vectors.clone();
        doubled_v.extend_from_slice(&vectors);
        let mut doubled_l = labels.clone();
        doubled_l.extend_from_slice(&labels);
        let m1 = fit_lda(&vectors, &labels, 0b1, "s", 1e-6).unwrap();
        let m2 = fit_lda(&doubled_v, &doubled_l, 0b1, "s", 1e-6).unwrap();
        assert!((m1.norm_mean[0] - m2.norm_mean[0]).abs() < 1e-12);
        assert!((m1.norm_std[0] - m2.norm_std[0]).abs() < 1e-12);
        assert!((m1.mean_real[0] - m2.mean_real[0]).abs() < 1e-12);
        // Pooled covariance divisor differs (n-2), the class geometry does
        // not; decisions must agree away from the knife-edge boundary.
        for i in -20..=20 {
            let v = vector_1d(i as f64 / 10.0);
            let d1 = classify(&m1, &v).unwrap();
            let d2 = classify(&m2, &v).unwrap();
            if d1.score.abs() > 1e-9 {
                assert_eq!(d1.label, d2.label, "probe {}", i);
            }
        }
    }

    #[test]
    fn tie_score_resolves_to_fake() {
        let (vectors, labels) = simple_1d_set();
        let model = fit_lda(&vectors, &labels, 0b1, "s", 1e-6).unwrap();
        // Mean of the two class means in normalized space scores exactly 0.
        let mid = 0.5 * (model.mean_real[0] + model.mean_fake[0]);
        let raw = mid * model.norm_std[0] + model.norm_mean[0];
        let decision = classify(&model, &vector_1d(raw)).unwrap();
        assert_eq!(decision.score, 0.0);
        assert_eq!(decision.label, Label::Fake);
    }

    #[test]
    fn class_mean_classifies_real() {
        let (vectors, labels) = simple_1d_set();
        let model = fit_lda(&vectors, &labels, 0b1, "s", 1e-6).unwrap();
        let raw = model.mean_real[0] * model.norm_std[0] + model.norm_mean[0];
        let decision = classify(&model, &vector_1d(raw)).unwrap();
        assert!(decision.score > 0.0);
        assert_eq!(decision.label, Label::Real);
    }

    #[test]
    fn insufficient_samples_and_empty_mask_error() {
        let vectors = vec![vector_1d(1.0), vector_1d(0.0)];
        let labels = vec![Label::Real, Label::Fake];
        assert!(matches!(
            fit_lda(&vectors, &labels, 0b1, "s", 1e-6),
            Err(ClassifierError::InsufficientSamples { .. })
        ));
        let (vectors, labels) = simple_1d_set();
        assert!(matches!(
            fit_lda(&vectors, &labels, 0, "s", 1e-6),
            Err(ClassifierError::EmptyMask)
        ));
    }

    #[test]
    fn degenerate_constant_feature_ties_to_fake() {
        let vectors = vec![vector_1d(0.5); 6];
        let labels = vec![
            Label::Real,
            Label::Real,
            Label::Real,
            Label::Fake,
            Label::Fake,
            Label::Fake,
        ];
        let model = fit_lda(&vectors, &labels, 0b1, "s", 1e-6).unwrap();
        assert_eq!(model.zero_variance_dims, vec![0]);
        let decision = classify(&model, &vector_1d(0.5)).unwrap();
        assert_eq!(decision.score, 0.0);
        assert_eq!(decision.label, Label::Fake);
    }

    #[test]
    fn mask_bits_round_trip() {
        assert_eq!(mask_to_bits(0b1), "1000000000");
        assert_eq!(mask_to_bits(0b1000000000), "0000000001");
        assert_eq!(mask_from_bits("1000000000"), Some(0b1));
        assert_eq!(mask_from_bits("0000000001"), Some(0b1000000000));
        for mask in 1u16..1024 {
            assert_eq!(mask_from_bits(&mask_to_bits(mask)), Some(mask));
        }
    }

    #[test]
    fn model_file_round_trip_preserves_decisions() {
        let (vectors, labels) = simple_1d_set();
        let model = fit_lda(&vectors, &labels, 0b1, "sensor-a", 1e-6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &Config::default(), &path).unwrap();
        let (loaded, config) = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(config, Config::default());
        for i in -30..=30 {
            let v = vector_1d(i as f64 / 7.0);
            let a = classify(&model, &v).unwrap();
            let b = classify(&loaded, &v).unwrap();
            assert_eq!(a.label, b.label);
            assert_eq!(a.score.to_bits(), b.score.to_bits());
        }
    }
}
