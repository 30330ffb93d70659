//! Patch-embedding anomaly detectors for audio spectrograms, with
//! localization and faithfulness metrics and a synthetic benchmark kit.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the common choices.

pub mod audio;
pub mod benchkit;
pub mod detectors;
pub mod error;
pub mod features;
pub mod metrics;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision pipeline, as used by the CLI and the benchmark.
pub type Spectrogram32 = audio::Spectrogram<f32>;
pub type Waveform32 = audio::Waveform<f32>;
pub type AnomalyMap32 = detectors::AnomalyMap<f32>;
pub type FittedModel32 = detectors::FittedModel<f32>;

/// Double-precision pipeline, used for gradient checks and oracles.
pub type Spectrogram64 = audio::Spectrogram<f64>;
pub type Waveform64 = audio::Waveform<f64>;
pub type AnomalyMap64 = detectors::AnomalyMap<f64>;
pub type FittedModel64 = detectors::FittedModel<f64>;
