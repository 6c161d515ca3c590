//! Energy concentration in the power spectrum.
//!
//! The foreground crop is mean-subtracted, Hann-windowed and transformed;
//! the power spectrum is binned into equal-width annular frequency bands and
//! the concentration is one minus the normalized band entropy. High-quality
//! ridge structure puts its energy into few bands.

use rustfft::num_complex::Complex64;

use crate::config::SpectrumParams;
use crate::dsp::{hann, ComplexGrid};
use crate::features::FeatureError;
use crate::image::{GrayImage, Mask};

/// Ring-band energies of the windowed foreground-crop power spectrum.
pub fn ring_band_energies(
    image: &GrayImage,
    mask: &Mask,
    params: &SpectrumParams,
) -> Result<Vec<f64>, FeatureError> {
    let Some((x0, y0, x1, y1)) = mask.bounding_box() else {
        return Err(FeatureError::EmptyForeground);
    };
    let crop_w = x1 - x0 + 1;
    let crop_h = y1 - y0 + 1;
    if crop_w < params.min_crop || crop_h < params.min_crop {
        return Err(FeatureError::ForegroundTooSmall {
            width: crop_w,
            height: crop_h,
            min: params.min_crop,
        });
    }

    let mut crop = vec![0.0f64; crop_w * crop_h];
    let mut mean = 0.0f64;
    for y in 0..crop_h {
        for x in 0..crop_w {
            let v = image.get(x0 + x, y0 + y) as f64;
            crop[y * crop_w + x] = v;
            mean += v;
        }
    }
    mean /= (crop_w * crop_h) as f64;

    let win_x = hann(crop_w);
    let win_y = hann(crop_h);
    let mut grid = ComplexGrid::zeroed(crop_w, crop_h);
    for y in 0..crop_h {
        for x in 0..crop_w {
            let v = (crop[y * crop_w + x] - mean) * win_x[x] * win_y[y];
            grid.set(x, y, Complex64::new(v, 0.0));
        }
    }
    grid.fft2(false);

    let band_width = (params.band_hi - params.band_lo) / params.bands as f64;
    let mut bands = vec![0.0f64; params.bands];
    for v in 0..crop_h {
        let fy = signed_frequency(v, crop_h);
        for u in 0..crop_w {
            let fx = signed_frequency(u, crop_w);
            let fr = fx.hypot(fy);
            if fr < params.band_lo || fr >= params.band_hi {
                continue;
            }
            let band = (((fr - params.band_lo) / band_width) as usize).min(params.bands - 1);
            bands[band] += grid.at(u, v).norm_sqr();
        }
    }
    Ok(bands)
}

#[inline]
fn signed_frequency(index: usize, n: usize) -> f64 {
    if 2 * index <= n {
        index as f64 / n as f64
    } else {
        index as f64 / n as f64 - 1.0
    }
}

/// One minus the normalized entropy of the band energy distribution.
///
/// All energy in a single band gives exactly 1; equal integer energies in
/// every band give exactly 0. Zero total energy maps to 0 (no measurable
/// concentration).
pub fn entropy_quality(bands: &[f64]) -> f64 {
    assert!(bands.len() >= 2, "need at least two bands");
    let total: f64 = bands.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return 0.0;
    }
    // H = ln(S) - sum(E ln E) / S; exact at the concentration extremes.
    let mut e_log_e = 0.0f64;
    for &e in bands {
        if e > 0.0 {
            e_log_e += e * e.ln();
        }
    }
    let entropy = total.ln() - e_log_e / total;
    let quality = 1.0 - entropy / (bands.len() as f64).ln();
    quality.clamp(0.0, 1.0)
}

/// Energy concentration of the foreground spectrum in [0, 1].
pub fn compute_energy_concentration(
    image: &GrayImage,
    mask: &Mask,
    params: &SpectrumParams,
) -> Result<f64, FeatureError> {
    Ok(entropy_quality(&ring_band_energies(image, mask, params)?))
}
