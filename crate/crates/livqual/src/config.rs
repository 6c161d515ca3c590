//! Extraction configuration: every tunable threshold in one serializable
//! record, embedded into model files so feature extraction stays
//! reproducible.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::GaborBankParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("config field out of range: {0}")]
    OutOfRange(String),
}

/// Spectral ring-band parameters for the energy-concentration feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    /// Number of equal-width annular bands.
    pub bands: usize,
    /// Lower radial frequency bound, cycles/pixel.
    pub band_lo: f64,
    /// Upper radial frequency bound, cycles/pixel.
    pub band_hi: f64,
    /// Minimum foreground bounding-box side for a meaningful spectrum.
    pub min_crop: usize,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            bands: 30,
            band_lo: 0.06,
            band_hi: 0.46,
            min_crop: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Side of the square analysis blocks, pixels.
    pub block_size: usize,
    pub gabor: GaborBankParams,
    pub spectrum: SpectrumParams,
    /// Orientation-change threshold (radians) above which a consecutive
    /// block pair counts as an abrupt direction change.
    pub t_abrupt: f64,
    /// Minimum ridge-valley sinusoid amplitude (gray levels) for a block to
    /// count as good / its signature as reliable.
    pub a_min: f64,
    /// Minimum signature variance (gray^2) for a block to count as good.
    pub v_min: f64,
    /// Plausible ridge frequency range for a reliable signature, cycles/pixel.
    pub freq_lo: f64,
    pub freq_hi: f64,
    /// Covariance regularization scale: epsilon = scale * trace / dim.
    pub epsilon_scale: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            block_size: 32,
            gabor: GaborBankParams::default(),
            spectrum: SpectrumParams::default(),
            t_abrupt: PI / 8.0,
            a_min: 8.0,
            v_min: 25.0,
            freq_lo: 0.04,
            freq_hi: 0.25,
            epsilon_scale: 1e-6,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::OutOfRange(msg));
        if self.block_size < 8 {
            return fail(format!("block_size {} < 8", self.block_size));
        }
        self.gabor
            .validate()
            .map_err(ConfigError::OutOfRange)?;
        if self.spectrum.bands < 2 {
            return fail(format!("spectrum.bands {} < 2", self.spectrum.bands));
        }
        if !(0.0 < self.spectrum.band_lo && self.spectrum.band_lo < self.spectrum.band_hi) {
            return fail("spectrum band bounds must satisfy 0 < lo < hi".into());
        }
        if self.spectrum.band_hi > 0.5_f64.hypot(0.5) {
            return fail("spectrum.band_hi beyond the representable radial frequency".into());
        }
        if !(self.t_abrupt > 0.0 && self.t_abrupt <= PI / 2.0) {
            return fail(format!("t_abrupt {} outside (0, pi/2]", self.t_abrupt));
        }
        if self.a_min < 0.0 || self.v_min < 0.0 {
            return fail("a_min and v_min must be non-negative".into());
        }
        if !(0.0 < self.freq_lo && self.freq_lo < self.freq_hi && self.freq_hi < 0.5) {
            return fail("signature frequency range must satisfy 0 < lo < hi < 0.5".into());
        }
        if self.epsilon_scale <= 0.0 {
            return fail(format!("epsilon_scale {} <= 0", self.epsilon_scale));
        }
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: Config =
            serde_json::from_str(&text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), ConfigError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| ConfigError::Malformed(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
