//! The ten image-quality measures and the assembled [`QualityVector`].
//!
//! Feature order is fixed and versioned: index 0 = `q_ocl` through index
//! 9 = `q_var`. Ridge-strength measures (`q_ocl`, `q_e`), ridge-continuity
//! measures (`q_loq`, `q_cof`) and ridge-clarity measures (`q_mean`,
//! `q_std`, `q_lcs1`, `q_lcs2`, `q_a`, `q_var`).

mod clarity;
mod spectral;
pub mod table;

pub use clarity::{
    compute_lcs, compute_sinusoid_goodness, extract_signature, lcs_block_overlap, BlockProjection,
    LcsBlockOverlap, LcsScores, RidgeSignature,
};
pub use spectral::{compute_energy_concentration, entropy_quality, ring_band_energies};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::dsp::sobel_gradients;
use crate::image::{block_partition, BlockGrid, GrayImage, ImageError, Mask};
use crate::linalg::eigenvalues_sym2x2;
use crate::preprocess::{angle_diff, estimate_orientation, segment_foreground, OrientationField};

pub const FEATURE_COUNT: usize = 10;

/// Feature names in the fixed vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "q_ocl", "q_e", "q_loq", "q_cof", "q_mean", "q_std", "q_lcs1", "q_lcs2", "q_a", "q_var",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no foreground segmented from the image")]
    EmptyForeground,
    #[error("foreground bounding box {width}x{height} below the {min}x{min} spectral minimum")]
    ForegroundTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("no comparable block pairs in the orientation field")]
    NoComparableBlocks,
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// The ordered ten-feature parameterization.
///
/// `q_mean` lives in [0, 255] gray levels and `q_std` in [0, 127.5]; all
/// other features are dimensionless in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityVector {
    pub q_ocl: f64,
    pub q_e: f64,
    pub q_loq: f64,
    pub q_cof: f64,
    pub q_mean: f64,
    pub q_std: f64,
    pub q_lcs1: f64,
    pub q_lcs2: f64,
    pub q_a: f64,
    pub q_var: f64,
}

impl QualityVector {
    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.q_ocl, self.q_e, self.q_loq, self.q_cof, self.q_mean, self.q_std, self.q_lcs1,
            self.q_lcs2, self.q_a, self.q_var,
        ]
    }

    pub fn from_array(values: [f64; FEATURE_COUNT]) -> Self {
        Self {
            q_ocl: values[0],
            q_e: values[1],
            q_loq: values[2],
            q_cof: values[3],
            q_mean: values[4],
            q_std: values[5],
            q_lcs1: values[6],
            q_lcs2: values[7],
            q_a: values[8],
            q_var: values[9],
        }
    }

    /// Range-invariant violations, empty when the vector is well-formed.
    pub fn range_violations(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let unit = [
            ("q_ocl", self.q_ocl),
            ("q_e", self.q_e),
            ("q_loq", self.q_loq),
            ("q_cof", self.q_cof),
            ("q_lcs1", self.q_lcs1),
            ("q_lcs2", self.q_lcs2),
            ("q_a", self.q_a),
            ("q_var", self.q_var),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                violations.push(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !(0.0..=255.0).contains(&self.q_mean) {
            violations.push(format!("q_mean = {} outside [0, 255]", self.q_mean));
        }
        if !(0.0..=127.5).contains(&self.q_std) {
            violations.push(format!("q_std = {} outside [0, 127.5]", self.q_std));
        }
        violations
    }
}

/// Orientation Certainty Level: centroid-weighted mean of per-block
/// eigenvalue-ratio scores of the gradient covariance.
pub fn compute_ocl(image: &GrayImage, grid: &BlockGrid, mask: &Mask) -> Result<f64, FeatureError> {
    let Some((cx, cy)) = mask.centroid() else {
        return Err(FeatureError::EmptyForeground);
    };
    let (bx0, by0, bx1, by1) = mask.bounding_box().expect("centroid implies foreground");
    let radius = 0.5 * ((bx1 - bx0) as f64).hypot((by1 - by0) as f64);

    let (gx, gy) = sobel_gradients(image);
    let w = image.width();
    let bs = grid.block_size();
    let mut weighted = 0.0f64;
    let mut weight_sum = 0.0f64;
    let mut any = false;
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            if !mask.block(row, col) {
                continue;
            }
            any = true;
            let (x0, y0) = grid.block_origin(row, col);
            let mut gxx = 0.0f64;
            let mut gyy = 0.0f64;
            let mut gxy = 0.0f64;
            for y in y0..y0 + bs {
                for x in x0..x0 + bs {
                    let i = y * w + x;
                    gxx += gx[i] * gx[i];
                    gyy += gy[i] * gy[i];
                    gxy += gx[i] * gy[i];
                }
            }
            let (l_max, l_min) = eigenvalues_sym2x2(gxx, gxy, gyy);
            let score = if l_max < 1e-9 {
                0.0
            } else {
                (1.0 - l_min / l_max).clamp(0.0, 1.0)
            };
            let (bcx, bcy) = grid.block_center(row, col);
            let dist_sq = (bcx - cx).powi(2) + (bcy - cy).powi(2);
            let weight = if radius < 1e-9 {
                1.0
            } else {
                (-dist_sq / (2.0 * radius * radius)).exp()
            };
            weighted += weight * score;
            weight_sum += weight;
        }
    }
    if !any {
        return Err(FeatureError::EmptyForeground);
    }
    Ok((weighted / weight_sum).clamp(0.0, 1.0))
}

/// Local Orientation Quality: mean over blocks of one minus the normalized
/// average absolute orientation difference to the valid 8-neighbors.
pub fn compute_loq(field: &OrientationField) -> Result<f64, FeatureError> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut total = 0.0f64;
    let mut blocks = 0usize;
    for row in 0..field.rows() {
        for col in 0..field.cols() {
            let center = field.block(row, col);
            if !center.valid {
                continue;
            }
            let mut diff_sum = 0.0f64;
            let mut neighbors = 0usize;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let nr = row as i64 + dr;
                    let nc = col as i64 + dc;
                    if nr < 0 || nc < 0 || nr >= field.rows() as i64 || nc >= field.cols() as i64 {
                        continue;
                    }
                    let neighbor = field.block(nr as usize, nc as usize);
                    if neighbor.valid {
                        diff_sum += angle_diff(center.theta, neighbor.theta);
                        neighbors += 1;
                    }
                }
            }
            if neighbors > 0 {
                let mean_diff = diff_sum / neighbors as f64;
                total += (1.0 - mean_diff / half_pi).clamp(0.0, 1.0);
                blocks += 1;
            }
        }
    }
    if blocks == 0 {
        return Err(FeatureError::NoComparableBlocks);
    }
    Ok(total / blocks as f64)
}

/// Continuity of the orientation field: one minus the fraction of
/// consecutive valid block pairs (along rows, then columns) whose
/// orientation difference exceeds `t_abrupt`.
pub fn compute_cof(field: &OrientationField, t_abrupt: f64) -> Result<f64, FeatureError> {
    let mut pairs = 0usize;
    let mut violations = 0usize;
    let mut tally = |a: &crate::preprocess::OrientationBlock,
                     b: &crate::preprocess::OrientationBlock| {
        if a.valid && b.valid {
            pairs += 1;
            if angle_diff(a.theta, b.theta) > t_abrupt {
                violations += 1;
            }
        }
    };
    for row in 0..field.rows() {
        for col in 0..field.cols().saturating_sub(1) {
            tally(field.block(row, col), field.block(row, col + 1));
        }
    }
    for col in 0..field.cols() {
        for row in 0..field.rows().saturating_sub(1) {
            tally(field.block(row, col), field.block(row + 1, col));
        }
    }
    if pairs == 0 {
        return Err(FeatureError::NoComparableBlocks);
    }
    Ok(1.0 - violations as f64 / pairs as f64)
}

/// Population mean and standard deviation of the foreground gray levels.
pub fn compute_gray_stats(image: &GrayImage, mask: &Mask) -> Result<(f64, f64), FeatureError> {
    let mut n = 0u64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for y in 0..image.height() {
        for x in 0..image.width() {
            if mask.pixel(x, y) {
                let v = image.get(x, y) as f64;
                n += 1;
                sum += v;
                sum_sq += v * v;
            }
        }
    }
    if n < 2 {
        return Err(FeatureError::EmptyForeground);
    }
    let mean = sum / n as f64;
    let variance = (sum_sq / n as f64 - mean * mean).max(0.0);
    Ok((mean, variance.sqrt()))
}

/// Extraction warnings that do not invalidate the vector.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// `q_lcs1` fell back to 0.5 because no block had a reliable signature.
    pub lcs1_fallback: bool,
}

/// Runs segmentation, orientation estimation and all ten measures.
pub fn extract_quality_vector(
    image: &GrayImage,
    config: &Config,
) -> Result<QualityVector, FeatureError> {
    extract_with_diagnostics(image, config).map(|(vector, _)| vector)
}

/// [`extract_quality_vector`] plus per-image warnings.
pub fn extract_with_diagnostics(
    image: &GrayImage,
    config: &Config,
) -> Result<(QualityVector, Diagnostics), FeatureError> {
    let grid = block_partition(image, config.block_size)?;
    let mask = segment_foreground(image, &grid, &config.gabor)?;
    extract_from_mask(image, &grid, &mask, config)
}

/// Extraction with a caller-supplied mask (fixtures force a full-foreground
/// mask to probe images that would not segment).
pub fn extract_from_mask(
    image: &GrayImage,
    grid: &BlockGrid,
    mask: &Mask,
    config: &Config,
) -> Result<(QualityVector, Diagnostics), FeatureError> {
    if mask.is_empty() {
        return Err(FeatureError::EmptyForeground);
    }
    let field = estimate_orientation(image, grid, mask);

    let q_ocl = compute_ocl(image, grid, mask)?;
    let q_e = compute_energy_concentration(image, mask, &config.spectrum)?;
    let q_loq = compute_loq(&field)?;
    let q_cof = compute_cof(&field, config.t_abrupt)?;
    let (q_mean, q_std) = compute_gray_stats(image, mask)?;
    let lcs = compute_lcs(image, grid, mask, &field, config)?;
    let (q_a, q_var) = compute_sinusoid_goodness(image, grid, mask, &field, config)?;

    let vector = QualityVector {
        q_ocl,
        q_e,
        q_loq,
        q_cof,
        q_mean,
        q_std,
        q_lcs1: lcs.q_lcs1,
        q_lcs2: lcs.q_lcs2,
        q_a,
        q_var,
    };
    let diagnostics = Diagnostics {
        lcs1_fallback: lcs.lcs1_fallback,
    };
    Ok((vector, diagnostics))
}
