//! One-class morphing attack detection from structured residual Fourier
//! spectra.
//!
//! An image is reduced to a residual log-magnitude spectrum (its own
//! power-law trend removed), laid out ring by ring around DC into a padded
//! matrix, and fed through a small learnable model whose one-dimensional
//! latent is scored against the bona fide training distribution.
//!
//! | module | role |
//! |---|---|
//! | [`image_io`] | image loading, grayscale, resize, manifests |
//! | [`spectrum`] | log-magnitude spectrum, power-law baseline, residual |
//! | [`rings`] | ring geometry and the padded ring matrix |
//! | [`model`] | projection, bands, autoencoder, template, gradients |
//! | [`trainer`] | Adam and the mini-batch training loop |
//! | [`scoring`] | latent calibration, anomaly score, EER and BPCER@APCER |
//! | [`harness`] | synthetic data and end-to-end experiments |

mod binio;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod features;
pub mod harness;
pub mod image_io;
pub mod model;
pub mod rings;
pub mod scoring;
pub mod spectrum;
pub mod trainer;

pub use error::{Error, Result};
pub use features::FeatureExtractor;
pub use image_io::{load_image, load_manifest, DatasetManifest, Label, SpectralImage, Split, ANALYSIS_SIZE};
pub use model::{ForwardTrace, ModelParams, ModelShape};
pub use rings::{RingGeometry, RingTensor};
pub use scoring::{LatentCalibration, ScoreReport};
pub use spectrum::{LogSpectrum, PowerLawFit, ResidualMap};
pub use trainer::{TrainConfig, TrainState};
