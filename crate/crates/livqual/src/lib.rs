//! Fingerprint liveness detection from a single image.
//!
//! The pipeline segments the fingerprint from the background with a Gabor
//! filter bank, extracts ten quality-related features (ridge strength,
//! continuity and clarity measures), selects the best feature subset per
//! sensor by exhaustive search with leave-one-out validation, and classifies
//! real vs. fake with a two-class LDA model. Evaluation reports FLR, FFR and
//! the average classification error ACE = (FLR + FFR) / 2 under a two-way
//! train/test cross-validation protocol.
//!
//! Module map:
//! - [`image`]: grayscale raster, block grid and foreground mask primitives,
//!   PGM/PNG readers and writers.
//! - [`preprocess`]: Gabor-bank foreground segmentation and block-wise
//!   orientation field estimation.
//! - [`features`]: the ten quality measures and [`features::QualityVector`].
//! - [`classifier`]: LDA fit/classify and the model file format.
//! - [`selection`]: exhaustive subset search scored by leave-one-out ACE.
//! - [`evaluation`]: dataset manifests, error rates, cross-validation.
//! - [`synth`]: deterministic synthetic fingerprint-like image generator
//!   used for fixtures and desk-scale corpora.

pub mod classifier;
pub mod config;
pub mod evaluation;
pub mod features;
pub mod image;
pub mod linalg;
pub mod preprocess;
pub mod selection;
pub mod synth;
pub mod textfmt;

mod dsp;

pub use classifier::{Label, LdaModel, LivenessDecision};
pub use config::Config;
pub use evaluation::{CrossValReport, DatasetManifest, EvaluationReport};
pub use features::QualityVector;
pub use image::{BlockGrid, GrayImage, Mask};
pub use preprocess::{GaborBankParams, OrientationField};
pub use selection::SubsetScore;
