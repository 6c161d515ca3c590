//! Deterministic synthetic fingerprint-like images with analytic ground
//! truth, used as desk-scale fixtures for the extraction oracles and the
//! end-to-end pipeline.
//!
//! Rendering is a pure function of (seed, spec). Randomness comes from
//! ChaCha8 seeded with the spec seed (the PRNG is pinned so golden files are
//! portable). Ridges are drawn from an analytic phase field whose gradient
//! gives the exact per-block orientation, so oracles can compare estimated
//! orientation against ground truth instead of against the implementation.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Label;
use crate::dsp::gaussian_blur;
use crate::evaluation::{DatasetManifest, ManifestRow, Split};
use crate::image::{save_image, GrayImage, ImageError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ridge flow pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlowPattern {
    /// Vertical ridges (orientation pi/2).
    Parallel,
    /// Constant ridge direction at the given angle in [0, pi).
    Rotated(f64),
    /// Quadratic phase field: the ridge orientation drifts linearly across
    /// the image while staying locally smooth. Curvature coefficients are
    /// dimensionless; keep them within about +/-0.25 so the local frequency
    /// stays near the nominal one.
    SmoothVarying {
        base_angle: f64,
        curve_x: f64,
        curve_y: f64,
        shear: f64,
    },
}

/// Region of the frame that carries ridges; the rest is flat background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Patch {
    Full,
    /// x0, y0, width, height in pixels.
    Rect(usize, usize, usize, usize),
    Rects(Vec<(usize, usize, usize, usize)>),
}

impl Patch {
    fn contains(&self, x: usize, y: usize) -> bool {
        match self {
            Patch::Full => true,
            Patch::Rect(x0, y0, w, h) => x >= *x0 && x < x0 + w && y >= *y0 && y < y0 + h,
            Patch::Rects(rects) => rects
                .iter()
                .any(|&(x0, y0, w, h)| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h),
        }
    }
}

/// Degradations applied in listed order after rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Degradation {
    GaussianBlur { sigma: f64 },
    AdditiveNoise { sigma: f64 },
    ContrastScale { factor: f64 },
    /// Flattens floor(fraction * N) of the fully-in-patch blocks to their
    /// mean gray level.
    BlockFlatten { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Nominal ridge frequency, cycles/pixel.
    pub frequency: f64,
    pub flow: FlowPattern,
    /// Ridge amplitude, gray levels.
    pub amplitude: f64,
    /// Background gray level.
    pub background: f64,
    pub patch: Patch,
    /// Block size used for ground-truth block annotations and flattening.
    pub block_size: usize,
    pub degradations: Vec<Degradation>,
}

impl SynthSpec {
    /// Clean full-frame ridges; building block for the fixtures.
    pub fn plain(seed: u64, size: usize, frequency: f64, flow: FlowPattern) -> Self {
        Self {
            seed,
            width: size,
            height: size,
            frequency,
            flow,
            amplitude: 50.0,
            background: 128.0,
            patch: Patch::Full,
            block_size: 32,
            degradations: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidSpec(m));
        if self.width < 32 || self.height < 32 {
            return fail(format!("{}x{} below 32x32", self.width, self.height));
        }
        if !(self.frequency > 0.0 && self.frequency < 0.5) {
            return fail(format!("frequency {} outside (0, 0.5)", self.frequency));
        }
        if self.amplitude < 0.0 {
            return fail(format!("amplitude {} < 0", self.amplitude));
        }
        if !(0.0..=255.0).contains(&self.background) {
            return fail(format!("background {} outside [0, 255]", self.background));
        }
        if self.block_size < 8 {
            return fail(format!("block_size {} < 8", self.block_size));
        }
        for d in &self.degradations {
            match *d {
                Degradation::GaussianBlur { sigma } if sigma < 0.0 => {
                    return fail(format!("blur sigma {sigma} < 0"));
                }
                Degradation::AdditiveNoise { sigma } if sigma < 0.0 => {
                    return fail(format!("noise sigma {sigma} < 0"));
                }
                Degradation::ContrastScale { factor } if factor <= 0.0 => {
                    return fail(format!("contrast factor {factor} <= 0"));
                }
                Degradation::BlockFlatten { fraction } if !(0.0..=1.0).contains(&fraction) => {
                    return fail(format!("flatten fraction {fraction} outside [0, 1]"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Phase-field gradient at (x, y); the phase itself is
    /// 2*pi*frequency*G(x, y) with grad G returned here (unit magnitude for
    /// constant flows).
    fn flow_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self.flow {
            FlowPattern::Parallel => (1.0, 0.0),
            FlowPattern::Rotated(angle) => {
                let normal = angle - PI / 2.0;
                (normal.cos(), normal.sin())
            }
            FlowPattern::SmoothVarying {
                base_angle,
                curve_x,
                curve_y,
                shear,
            } => {
                let scale = self.width.max(self.height) as f64;
                let normal = base_angle - PI / 2.0;
                (
                    normal.cos() + curve_x * x / scale + shear * y / scale,
                    normal.sin() + shear * x / scale + curve_y * y / scale,
                )
            }
        }
    }

    fn phase(&self, x: f64, y: f64) -> f64 {
        let omega = 2.0 * PI * self.frequency;
        match self.flow {
            FlowPattern::Parallel => omega * x,
            FlowPattern::Rotated(angle) => {
                let normal = angle - PI / 2.0;
                omega * (x * normal.cos() + y * normal.sin())
            }
            FlowPattern::SmoothVarying {
                base_angle,
                curve_x,
                curve_y,
                shear,
            } => {
                let scale = self.width.max(self.height) as f64;
                let normal = base_angle - PI / 2.0;
                omega
                    * (x * normal.cos()
                        + y * normal.sin()
                        + (curve_x * x * x + curve_y * y * y) / (2.0 * scale)
                        + shear * x * y / scale)
            }
        }
    }

    /// Exact ridge orientation at (x, y), in [0, pi).
    pub fn orientation_at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = self.flow_gradient(x, y);
        let mut theta = gy.atan2(gx) + PI / 2.0;
        theta = theta.rem_euclid(PI);
        if theta >= PI {
            theta -= PI;
        }
        theta
    }
}

/// Analytic ground truth emitted next to each generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub block_size: usize,
    pub grid_cols: usize,
    pub grid_rows: usize,
    /// Exact orientation at the block center for blocks fully inside the
    /// ridge patch; `None` for background or partially covered blocks.
    pub block_theta: Vec<Option<f64>>,
    /// Blocks flattened by a `BlockFlatten` degradation, (row, col).
    pub flattened_blocks: Vec<(usize, usize)>,
    /// Pixels clipped to [0, 255] during quantization.
    pub clamped_pixels: usize,
}

impl GroundTruth {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), SynthError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn gaussian_sample(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one normal per uniform pair keeps the stream layout simple.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Renders the image and its ground truth. Identical (seed, spec) pairs
/// produce bit-identical outputs.
pub fn generate(spec: &SynthSpec) -> Result<(GrayImage, GroundTruth), SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut buffer = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = if spec.patch.contains(x, y) {
                spec.background + spec.amplitude * spec.phase(x as f64, y as f64).sin()
            } else {
                spec.background
            };
            buffer[y * w + x] = v;
        }
    }

    let bs = spec.block_size;
    let cols = w / bs;
    let rows = h / bs;
    let block_fully_in_patch = |row: usize, col: usize| {
        let (x0, y0) = (col * bs, row * bs);
        spec.patch.contains(x0, y0)
            && spec.patch.contains(x0 + bs - 1, y0)
            && spec.patch.contains(x0, y0 + bs - 1)
            && spec.patch.contains(x0 + bs - 1, y0 + bs - 1)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut flattened_blocks = Vec::new();
    for degradation in &spec.degradations {
        match *degradation {
            Degradation::GaussianBlur { sigma } => {
                buffer = gaussian_blur(&buffer, w, h, sigma);
            }
            Degradation::AdditiveNoise { sigma } => {
                for v in &mut buffer {
                    *v += sigma * gaussian_sample(&mut rng);
                }
            }
            Degradation::ContrastScale { factor } => {
                let mean = buffer.iter().sum::<f64>() / buffer.len() as f64;
                for v in &mut buffer {
                    *v = mean + factor * (*v - mean);
                }
            }
            Degradation::BlockFlatten { fraction } => {
                let mut candidates: Vec<(usize, usize)> = (0..rows)
                    .flat_map(|r| (0..cols).map(move |c| (r, c)))
                    .filter(|&(r, c)| block_fully_in_patch(r, c))
                    .collect();
                let take = (fraction * candidates.len() as f64).floor() as usize;
                // Fisher-Yates prefix driven by the spec rng.
                for i in 0..take.min(candidates.len().saturating_sub(1)) {
                    let j = rng.random_range(i..candidates.len());
                    candidates.swap(i, j);
                }
                for &(r, c) in candidates.iter().take(take) {
                    let (x0, y0) = (c * bs, r * bs);
                    let mut mean = 0.0;
                    for y in y0..y0 + bs {
                        for x in x0..x0 + bs {
                            mean += buffer[y * w + x];
                        }
                    }
                    mean /= (bs * bs) as f64;
                    for y in y0..y0 + bs {
                        for x in x0..x0 + bs {
                            buffer[y * w + x] = mean;
                        }
                    }
                    flattened_blocks.push((r, c));
                }
            }
        }
    }

    let mut clamped_pixels = 0usize;
    let pixels: Vec<u8> = buffer
        .iter()
        .map(|&v| {
            let r = v.round();
            if !(0.0..=255.0).contains(&r) {
                clamped_pixels += 1;
            }
            r.clamp(0.0, 255.0) as u8
        })
        .collect();
    let image = GrayImage::new(w, h, 500, pixels)?;

    let mut block_theta = Vec::with_capacity(cols * rows);
    for row in 0..rows {
        for col in 0..cols {
            if block_fully_in_patch(row, col) {
                let cx = (col * bs) as f64 + (bs as f64 - 1.0) / 2.0;
                let cy = (row * bs) as f64 + (bs as f64 - 1.0) / 2.0;
                block_theta.push(Some(spec.orientation_at(cx, cy)));
            } else {
                block_theta.push(None);
            }
        }
    }
    let truth = GroundTruth {
        seed: spec.seed,
        block_size: bs,
        grid_cols: cols,
        grid_rows: rows,
        block_theta,
        flattened_blocks,
        clamped_pixels,
    };
    Ok((image, truth))
}

/// Side length of corpus images.
pub const CORPUS_IMAGE_SIZE: usize = 192;
/// Margin of flat background around the ridge patch.
pub const CORPUS_MARGIN: usize = 16;

/// Degradation recipe that turns a clean spec into its "fake" counterpart:
/// weaker ridge strength and clarity, mimicking gummy-finger acquisition.
pub fn fake_degradations() -> Vec<Degradation> {
    vec![
        Degradation::GaussianBlur { sigma: 1.5 },
        Degradation::AdditiveNoise { sigma: 12.0 },
        Degradation::ContrastScale { factor: 0.7 },
    ]
}

/// Base spec shared by the real/fake pair with corpus index `index`.
pub fn corpus_spec(corpus_seed: u64, split: Split, index: usize) -> SynthSpec {
    let seed = match split {
        Split::Dev => corpus_seed.wrapping_add(index as u64),
        Split::Test => corpus_seed.wrapping_add(1_000_000 + index as u64),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let flow = FlowPattern::SmoothVarying {
        base_angle: rng.random_range(0.0..PI),
        curve_x: rng.random_range(-0.2..0.2),
        curve_y: rng.random_range(-0.2..0.2),
        shear: rng.random_range(-0.15..0.15),
    };
    let size = CORPUS_IMAGE_SIZE;
    let margin = CORPUS_MARGIN;
    SynthSpec {
        seed,
        width: size,
        height: size,
        frequency: rng.random_range(0.09..0.115),
        flow,
        amplitude: rng.random_range(38.0..48.0),
        background: rng.random_range(118.0..138.0),
        patch: Patch::Rect(margin, margin, size - 2 * margin, size - 2 * margin),
        block_size: 32,
        degradations: Vec::new(),
    }
}

/// Generates a labeled corpus: clean images as the real class and the same
/// specs run through [`fake_degradations`] as the fake class, with disjoint
/// dev/test seed ranges. Images land in `out_dir` as PGM plus a
/// `manifest.csv`; the manifest is also returned.
pub fn make_liveness_corpus(
    n_per_class: usize,
    corpus_seed: u64,
    sensor: &str,
    out_dir: &Path,
) -> Result<DatasetManifest, SynthError> {
    if n_per_class < 10 {
        return Err(SynthError::InvalidSpec(format!(
            "n_per_class {n_per_class} < 10"
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| SynthError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let half = n_per_class / 2;
    let mut rows = Vec::with_capacity(2 * n_per_class);
    for class_index in 0..n_per_class {
        let (split, index) = if class_index < half {
            (Split::Dev, class_index)
        } else {
            (Split::Test, class_index - half)
        };
        let base = corpus_spec(corpus_seed, split, index);
        for &label in &[Label::Real, Label::Fake] {
            let mut spec = base.clone();
            if label == Label::Fake {
                spec.degradations = fake_degradations();
            }
            let (image, truth) = generate(&spec)?;
            let name = format!("{}_{}_{:04}.pgm", label, split.as_str(), index);
            let path: PathBuf = out_dir.join(&name);
            save_image(&image, &path)?;
            truth.save(out_dir.join(format!("{}_{}_{:04}.truth.json", label, split.as_str(), index)))?;
            rows.push(ManifestRow {
                path: path.display().to_string(),
                label,
                sensor: sensor.to_string(),
                split,
                material: None,
                procedure: None,
            });
        }
    }
    let manifest = DatasetManifest { rows };
    manifest
        .save(out_dir.join("manifest.csv"))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(manifest)
}
