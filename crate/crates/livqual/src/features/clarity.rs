//! Ridge-clarity measures built on the sinusoidal ridge-valley model.
//!
//! Each block is projected onto the axis orthogonal to its ridge direction,
//! averaging along the ridges, which yields a 1-D gray profile. The profile
//! drives the signature parameters (amplitude, variance, frequency), the
//! ridge/valley pixel split for the clarity scores, and the good/bad block
//! fractions.

use crate::config::Config;
use crate::features::FeatureError;
use crate::image::{BlockGrid, GrayImage, Mask};
use crate::preprocess::OrientationField;

/// 1-D projection of a block orthogonal to the ridge direction.
#[derive(Debug, Clone)]
pub struct BlockProjection {
    /// Mean gray level per unit-width bin along the projection axis.
    pub profile: Vec<f64>,
    /// (intensity, profile bin) for every pixel of the block.
    pub pixel_bins: Vec<(u8, usize)>,
}

/// Projects block (row, col) onto the axis orthogonal to `theta`.
pub(crate) fn project_block(
    image: &GrayImage,
    grid: &BlockGrid,
    row: usize,
    col: usize,
    theta: f64,
) -> BlockProjection {
    let bs = grid.block_size();
    let (x0, y0) = grid.block_origin(row, col);
    let (cx, cy) = grid.block_center(row, col);
    // Axis normal to the ridges; intensity varies along it.
    let normal = theta - std::f64::consts::FRAC_PI_2;
    let (sin_n, cos_n) = normal.sin_cos();

    let mut positions = Vec::with_capacity(bs * bs);
    let mut min_s = f64::INFINITY;
    for y in y0..y0 + bs {
        for x in x0..x0 + bs {
            let s = (x as f64 - cx) * cos_n + (y as f64 - cy) * sin_n;
            min_s = min_s.min(s);
            positions.push((image.get(x, y), s));
        }
    }
    let max_s = positions
        .iter()
        .fold(f64::NEG_INFINITY, |m, &(_, s)| m.max(s));
    let bins = ((max_s - min_s).round() as usize) + 1;

    let mut sums = vec![0.0f64; bins];
    let mut counts = vec![0usize; bins];
    let mut pixel_bins = Vec::with_capacity(positions.len());
    for (value, s) in positions {
        let bin = ((s - min_s).round() as usize).min(bins - 1);
        sums[bin] += value as f64;
        counts[bin] += 1;
        pixel_bins.push((value, bin));
    }
    let mut profile = vec![0.0f64; bins];
    for i in 0..bins {
        if counts[i] > 0 {
            profile[i] = sums[i] / counts[i] as f64;
        }
    }
    // Fill the rare empty bin from its nearest populated neighbors.
    for i in 0..bins {
        if counts[i] == 0 {
            let left = (0..i).rev().find(|&j| counts[j] > 0);
            let right = (i + 1..bins).find(|&j| counts[j] > 0);
            profile[i] = match (left, right) {
                (Some(l), Some(r)) => 0.5 * (profile[l] + profile[r]),
                (Some(l), None) => profile[l],
                (None, Some(r)) => profile[r],
                (None, None) => 0.0,
            };
        }
    }
    BlockProjection {
        profile,
        pixel_bins,
    }
}

/// Refined local extremum: sub-bin position and interpolated value.
#[derive(Debug, Clone, Copy)]
struct Extremum {
    position: f64,
    value: f64,
}

/// Interior local extrema with three-point parabolic refinement.
fn local_extrema(profile: &[f64]) -> (Vec<Extremum>, Vec<Extremum>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..profile.len().saturating_sub(1) {
        let (left, mid, right) = (profile[i - 1], profile[i], profile[i + 1]);
        let is_max = mid > left && mid >= right;
        let is_min = mid < left && mid <= right;
        if !is_max && !is_min {
            continue;
        }
        let denom = left - 2.0 * mid + right;
        let (position, value) = if denom.abs() > 1e-12 {
            let delta = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
            (i as f64 + delta, mid - 0.25 * (left - right) * delta)
        } else {
            (i as f64, mid)
        };
        if is_max {
            maxima.push(Extremum { position, value });
        } else {
            minima.push(Extremum { position, value });
        }
    }
    (maxima, minima)
}

/// Per-block ridge-valley sinusoid parameters.
#[derive(Debug, Clone)]
pub struct RidgeSignature {
    /// Projected gray profile orthogonal to the ridge direction.
    pub profile: Vec<f64>,
    /// Half the mean peak-to-trough swing, gray levels.
    pub amplitude: f64,
    /// Population variance of the profile, gray^2.
    pub variance: f64,
    /// Ridge frequency from mean peak spacing, cycles/pixel (0 when fewer
    /// than two peaks are visible).
    pub frequency: f64,
    pub reliable: bool,
}

/// Extracts the ridge-valley signature of one block.
pub fn extract_signature(
    image: &GrayImage,
    grid: &BlockGrid,
    row: usize,
    col: usize,
    theta: f64,
    config: &Config,
) -> RidgeSignature {
    let projection = project_block(image, grid, row, col, theta);
    signature_from_projection(&projection, config)
}

fn signature_from_projection(projection: &BlockProjection, config: &Config) -> RidgeSignature {
    let profile = &projection.profile;
    let (maxima, minima) = local_extrema(profile);

    let amplitude = if maxima.is_empty() || minima.is_empty() {
        0.0
    } else {
        let max_mean: f64 = maxima.iter().map(|e| e.value).sum::<f64>() / maxima.len() as f64;
        let min_mean: f64 = minima.iter().map(|e| e.value).sum::<f64>() / minima.len() as f64;
        ((max_mean - min_mean) / 2.0).max(0.0)
    };

    let mean: f64 = profile.iter().sum::<f64>() / profile.len() as f64;
    let variance: f64 =
        profile.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / profile.len() as f64;

    let frequency = if maxima.len() >= 2 {
        let span = maxima.last().unwrap().position - maxima[0].position;
        let mean_spacing = span / (maxima.len() - 1) as f64;
        if mean_spacing > 0.0 {
            1.0 / mean_spacing
        } else {
            0.0
        }
    } else {
        0.0
    };

    let reliable = amplitude >= config.a_min
        && frequency >= config.freq_lo
        && frequency <= config.freq_hi;
    RidgeSignature {
        profile: profile.clone(),
        amplitude,
        variance,
        frequency,
        reliable,
    }
}

/// Ridge/valley gray-distribution overlap of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcsBlockOverlap {
    /// Fraction of ridge pixels brighter than the decision threshold.
    pub alpha: f64,
    /// Fraction of valley pixels darker than the decision threshold.
    pub beta: f64,
    /// (alpha + beta) / 2.
    pub overlap: f64,
}

/// Classifies pixels as ridge (below-mean profile segments, darker) or
/// valley and measures the overlap of the two gray distributions. Returns
/// `None` when the split is degenerate (all pixels on one side).
pub fn lcs_block_overlap(pixel_bins: &[(u8, usize)], profile: &[f64]) -> Option<LcsBlockOverlap> {
    let profile_mean: f64 = profile.iter().sum::<f64>() / profile.len() as f64;
    let mut ridge_count = 0u64;
    let mut ridge_sum = 0.0f64;
    let mut valley_count = 0u64;
    let mut valley_sum = 0.0f64;
    for &(value, bin) in pixel_bins {
        if profile[bin] < profile_mean {
            ridge_count += 1;
            ridge_sum += value as f64;
        } else {
            valley_count += 1;
            valley_sum += value as f64;
        }
    }
    if ridge_count == 0 || valley_count == 0 {
        return None;
    }
    let ridge_mean = ridge_sum / ridge_count as f64;
    let valley_mean = valley_sum / valley_count as f64;
    let threshold = 0.5 * (ridge_mean + valley_mean);

    let mut alpha_hits = 0u64;
    let mut beta_hits = 0u64;
    for &(value, bin) in pixel_bins {
        let v = value as f64;
        if profile[bin] < profile_mean {
            if v > threshold {
                alpha_hits += 1;
            }
        } else if v < threshold {
            beta_hits += 1;
        }
    }
    let alpha = alpha_hits as f64 / ridge_count as f64;
    let beta = beta_hits as f64 / valley_count as f64;
    Some(LcsBlockOverlap {
        alpha,
        beta,
        overlap: 0.5 * (alpha + beta),
    })
}

/// Neutral clarity assigned to blocks whose sinusoid cannot be extracted.
const UNRELIABLE_OVERLAP: f64 = 0.5;

/// Local Clarity Scores. Lower means clearer; no inversion is applied.
#[derive(Debug, Clone, Copy)]
pub struct LcsScores {
    /// Mean overlap over reliable blocks only (optimistic variant).
    pub q_lcs1: f64,
    /// Mean overlap over all foreground blocks, unreliable blocks pinned to
    /// the worst clarity level 0.5.
    pub q_lcs2: f64,
    /// True when no reliable block existed and `q_lcs1` is the 0.5 fallback.
    pub lcs1_fallback: bool,
}

/// Computes both Local Clarity Scores over the foreground.
pub fn compute_lcs(
    image: &GrayImage,
    grid: &BlockGrid,
    mask: &Mask,
    field: &OrientationField,
    config: &Config,
) -> Result<LcsScores, FeatureError> {
    let mut reliable_sum = 0.0f64;
    let mut reliable_count = 0usize;
    let mut all_sum = 0.0f64;
    let mut all_count = 0usize;
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            if !mask.block(row, col) {
                continue;
            }
            all_count += 1;
            let block = field.block(row, col);
            let overlap = if block.valid {
                let projection = project_block(image, grid, row, col, block.theta);
                let signature = signature_from_projection(&projection, config);
                if signature.reliable {
                    lcs_block_overlap(&projection.pixel_bins, &projection.profile)
                        .map(|o| o.overlap)
                } else {
                    None
                }
            } else {
                None
            };
            match overlap {
                Some(v) => {
                    reliable_sum += v;
                    reliable_count += 1;
                    all_sum += v;
                }
                None => all_sum += UNRELIABLE_OVERLAP,
            }
        }
    }
    if all_count == 0 {
        return Err(FeatureError::EmptyForeground);
    }
    let lcs1_fallback = reliable_count == 0;
    let q_lcs1 = if lcs1_fallback {
        UNRELIABLE_OVERLAP
    } else {
        reliable_sum / reliable_count as f64
    };
    Ok(LcsScores {
        q_lcs1,
        q_lcs2: all_sum / all_count as f64,
        lcs1_fallback,
    })
}

/// Fractions of foreground blocks whose sinusoid amplitude and variance
/// clear the good-block thresholds. Blocks without a valid orientation
/// count as bad for both.
pub fn compute_sinusoid_goodness(
    image: &GrayImage,
    grid: &BlockGrid,
    mask: &Mask,
    field: &OrientationField,
    config: &Config,
) -> Result<(f64, f64), FeatureError> {
    let mut foreground = 0usize;
    let mut good_amplitude = 0usize;
    let mut good_variance = 0usize;
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            if !mask.block(row, col) {
                continue;
            }
            foreground += 1;
            let block = field.block(row, col);
            if !block.valid {
                continue;
            }
            let signature = extract_signature(image, grid, row, col, block.theta, config);
            if signature.amplitude >= config.a_min {
                good_amplitude += 1;
            }
            if signature.variance >= config.v_min {
                good_variance += 1;
            }
        }
    }
    if foreground == 0 {
        return Err(FeatureError::EmptyForeground);
    }
    Ok((
        good_amplitude as f64 / foreground as f64,
        good_variance as f64 / foreground as f64,
    ))
}
