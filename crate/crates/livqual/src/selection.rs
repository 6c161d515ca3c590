//! Exhaustive feature-subset search scored by leave-one-out ACE.
//!
//! All 1,023 non-empty masks over the ten features are scored; every fold
//! refits the classifier from scratch, normalization statistics included, so
//! no training information leaks into the held-out sample. Ties resolve by
//! ACE, then smaller cardinality, then smaller mask value.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    classify, fit_lda, mask_cardinality, mask_from_bits, mask_to_bits, ClassifierError, Label,
    LabeledSamples,
};
use crate::features::FEATURE_COUNT;
use crate::textfmt::fmt_sig9;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("leave-one-out needs at least {needed} samples per class, got {got} for {label}")]
    InsufficientSamples {
        label: Label,
        got: usize,
        needed: usize,
    },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("malformed subset file: {0}")]
    MalformedSubset(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Leave-one-out performance of one feature subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetScore {
    pub subset_mask: u16,
    /// Percentages over the development set.
    pub loo_ace: f64,
    pub loo_flr: f64,
    pub loo_ffr: f64,
    pub cardinality: usize,
}

impl SubsetScore {
    /// Total order used for ranking: ACE, then cardinality, then mask value.
    pub fn ranking_cmp(&self, other: &Self) -> Ordering {
        self.loo_ace
            .partial_cmp(&other.loo_ace)
            .unwrap_or(Ordering::Equal)
            .then(self.cardinality.cmp(&other.cardinality))
            .then(self.subset_mask.cmp(&other.subset_mask))
    }
}

const MIN_PER_CLASS_LOO: usize = 3;

/// Scores one subset with strict leave-one-out: per fold, the classifier
/// (including normalization) is refit on all samples but one.
pub fn loo_ace(
    dataset: &LabeledSamples,
    subset_mask: u16,
    epsilon_scale: f64,
) -> Result<SubsetScore, SelectionError> {
    for &label in [Label::Real, Label::Fake].iter() {
        let got = dataset.count(label);
        if got < MIN_PER_CLASS_LOO {
            return Err(SelectionError::InsufficientSamples {
                label,
                got,
                needed: MIN_PER_CLASS_LOO,
            });
        }
    }
    let n = dataset.len();
    let mut fold_vectors = Vec::with_capacity(n - 1);
    let mut fold_labels = Vec::with_capacity(n - 1);
    let mut fake_as_real = 0usize;
    let mut real_as_fake = 0usize;
    for held_out in 0..n {
        fold_vectors.clear();
        fold_labels.clear();
        for i in 0..n {
            if i != held_out {
                fold_vectors.push(dataset.vectors[i]);
                fold_labels.push(dataset.labels[i]);
            }
        }
        let model = fit_lda(&fold_vectors, &fold_labels, subset_mask, "loo", epsilon_scale)?;
        let decision = classify(&model, &dataset.vectors[held_out])?;
        match (dataset.labels[held_out], decision.label) {
            (Label::Fake, Label::Real) => fake_as_real += 1,
            (Label::Real, Label::Fake) => real_as_fake += 1,
            _ => {}
        }
    }
    let n_fake = dataset.count(Label::Fake);
    let n_real = dataset.count(Label::Real);
    let loo_flr = 100.0 * fake_as_real as f64 / n_fake as f64;
    let loo_ffr = 100.0 * real_as_fake as f64 / n_real as f64;
    Ok(SubsetScore {
        subset_mask,
        loo_ace: (loo_flr + loo_ffr) / 2.0,
        loo_flr,
        loo_ffr,
        cardinality: mask_cardinality(subset_mask),
    })
}

/// Result of the exhaustive search: the winner plus the complete ranking of
/// all 1,023 subsets in tie-break order.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub sensor: String,
    pub best: SubsetScore,
    pub ranking: Vec<SubsetScore>,
}

/// Scores every non-empty subset mask. Masks are scored independently (in
/// parallel) and reduced through the total tie-break order, so the ranking
/// is schedule-independent.
pub fn exhaustive_select(
    dataset: &LabeledSamples,
    sensor: &str,
    epsilon_scale: f64,
) -> Result<SelectionResult, SelectionError> {
    let masks: Vec<u16> = (1u16..1 << FEATURE_COUNT).collect();
    let mut ranking = masks
        .par_iter()
        .map(|&mask| loo_ace(dataset, mask, epsilon_scale))
        .collect::<Result<Vec<_>, _>>()?;
    ranking.sort_by(|a, b| a.ranking_cmp(b));
    Ok(SelectionResult {
        sensor: sensor.to_string(),
        best: ranking[0],
        ranking,
    })
}

/// Serial variant of [`exhaustive_select`]; must produce an identical
/// ranking.
pub fn exhaustive_select_serial(
    dataset: &LabeledSamples,
    sensor: &str,
    epsilon_scale: f64,
) -> Result<SelectionResult, SelectionError> {
    let mut ranking = (1u16..1 << FEATURE_COUNT)
        .map(|mask| loo_ace(dataset, mask, epsilon_scale))
        .collect::<Result<Vec<_>, _>>()?;
    ranking.sort_by(|a, b| a.ranking_cmp(b));
    Ok(SelectionResult {
        sensor: sensor.to_string(),
        best: ranking[0],
        ranking,
    })
}

/// Minimum ACE per subset cardinality, k = 1..=10.
pub fn best_by_cardinality(ranking: &[SubsetScore]) -> Vec<(usize, f64)> {
    (1..=FEATURE_COUNT)
        .map(|k| {
            let best = ranking
                .iter()
                .filter(|s| s.cardinality == k)
                .map(|s| s.loo_ace)
                .fold(f64::INFINITY, f64::min);
            (k, best)
        })
        .collect()
}

/// Ranking as CSV, tie-break order: `mask_bits,cardinality,ace,flr,ffr`.
pub fn ranking_to_csv(ranking: &[SubsetScore]) -> String {
    let mut out = String::from("mask_bits,cardinality,ace,flr,ffr\n");
    for score in ranking {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            mask_to_bits(score.subset_mask),
            score.cardinality,
            fmt_sig9(score.loo_ace),
            fmt_sig9(score.loo_flr),
            fmt_sig9(score.loo_ffr)
        );
    }
    out
}

/// Cardinality curve as CSV: `cardinality,ace`.
pub fn curve_to_csv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("cardinality,ace\n");
    for &(k, ace) in curve {
        let _ = writeln!(out, "{},{}", k, fmt_sig9(ace));
    }
    out
}

/// On-disk best-subset document.
#[derive(Debug, Serialize, Deserialize)]
struct SubsetFile {
    sensor: String,
    mask_bits: String,
    loo_ace: f64,
    loo_flr: f64,
    loo_ffr: f64,
}

pub fn save_subset<P: AsRef<Path>>(
    sensor: &str,
    score: &SubsetScore,
    path: P,
) -> Result<(), SelectionError> {
    let path = path.as_ref();
    let file = SubsetFile {
        sensor: sensor.to_string(),
        mask_bits: mask_to_bits(score.subset_mask),
        loo_ace: score.loo_ace,
        loo_flr: score.loo_flr,
        loo_ffr: score.loo_ffr,
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| SelectionError::MalformedSubset(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| SelectionError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a best-subset document, returning (sensor, score).
pub fn load_subset<P: AsRef<Path>>(path: P) -> Result<(String, SubsetScore), SelectionError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SelectionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: SubsetFile =
        serde_json::from_str(&text).map_err(|e| SelectionError::MalformedSubset(e.to_string()))?;
    let mask = mask_from_bits(&file.mask_bits).ok_or_else(|| {
        SelectionError::MalformedSubset(format!("bad mask_bits {:?}", file.mask_bits))
    })?;
    Ok((
        file.sensor,
        SubsetScore {
            subset_mask: mask,
            loo_ace: file.loo_ace,
            loo_flr: file.loo_flr,
            loo_ffr: file.loo_ffr,
            cardinality: mask_cardinality(mask),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::QualityVector;

    fn vector(values: &[f64]) -> QualityVector {
        let mut a = [0.0; FEATURE_COUNT];
        a[..values.len()].copy_from_slice(values);
        QualityVector::from_array(a)
    }

    fn separated_1d() -> LabeledSamples {
        let mut set = LabeledSamples::default();
        for i in 0..5 {
            set.push(vector(&[1.0 + 0.01 * (i as f64 - 2.0)]), Label::Real);
            set.push(vector(&[0.0 + 0.01 * (i as f64 - 2.0)]), Label::Fake);
        }
        set
    }

    #[test]
    fn perfectly_separated_classes_score_zero() {
        let score = loo_ace(&separated_1d(), 0b1, 1e-6).unwrap();
        assert_eq!(score.loo_ace, 0.0);
        assert_eq!(score.loo_flr, 0.0);
        assert_eq!(score.loo_ffr, 0.0);
    }

    #[test]
    fn constant_feature_ties_everything_to_fake() {
        let mut set = LabeledSamples::default();
        for _ in 0..5 {
            set.push(vector(&[0.7]), Label::Real);
            set.push(vector(&[0.7]), Label::Fake);
        }
        let score = loo_ace(&set, 0b1, 1e-6).unwrap();
        assert_eq!(score.loo_flr, 0.0);
        assert_eq!(score.loo_ffr, 100.0);
        assert_eq!(score.loo_ace, 50.0);
    }

    #[test]
    fn loo_requires_three_per_class() {
        let mut set = LabeledSamples::default();
        set.push(vector(&[1.0]), Label::Real);
        set.push(vector(&[1.1]), Label::Real);
        set.push(vector(&[0.0]), Label::Fake);
        set.push(vector(&[0.1]), Label::Fake);
        set.push(vector(&[0.2]), Label::Fake);
        assert!(matches!(
            loo_ace(&set, 0b1, 1e-6),
            Err(SelectionError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn ranking_is_a_permutation_of_all_masks() {
        let result = exhaustive_select(&separated_1d(), "s", 1e-6).unwrap();
        assert_eq!(result.ranking.len(), 1023);
        let mut seen = vec![false; 1024];
        for score in &result.ranking {
            assert!(!seen[score.subset_mask as usize], "duplicate mask");
            seen[score.subset_mask as usize] = true;
        }
        assert!(!seen[0]);
    }

    #[test]
    fn curve_has_ten_points_bounded_by_global_best() {
        let result = exhaustive_select(&separated_1d(), "s", 1e-6).unwrap();
        let curve = best_by_cardinality(&result.ranking);
        assert_eq!(curve.len(), 10);
        for &(_, ace) in &curve {
            assert!(ace >= result.best.loo_ace);
        }
    }

    #[test]
    fn subset_file_round_trip() {
        let score = SubsetScore {
            subset_mask: 0b1100110011,
            loo_ace: 1.25,
            loo_flr: 1.0,
            loo_ffr: 1.5,
            cardinality: 6,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("subset.json");
        save_subset("biometrika", &score, &path).unwrap();
        let (sensor, loaded) = load_subset(&path).unwrap();
        assert_eq!(sensor, "biometrika");
        assert_eq!(loaded, score);
    }
}
