use serde::{Deserialize, Serialize};

use crate::audio::SpectrogramParams;
use crate::detectors::{DetectorConfig, DetectorKind, SampleReduction, StfpmConfig, DEFAULT_CORESET_FRACTION, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::features::ExtractorSpec;
use crate::metrics::DEFAULT_PRO_FPR_LIMIT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Gaussian smoothing of upsampled maps, in spectrogram cells.
    pub smoothing_sigma: f64,
    pub pro_fpr_limit: f64,
    pub sample_reduction: SampleReduction,
    /// Compute faithfulness (two extra scoring passes per anomalous clip).
    pub faithfulness: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            smoothing_sigma: 4.0,
            pro_fpr_limit: DEFAULT_PRO_FPR_LIMIT,
            sample_reduction: SampleReduction::Max,
            faithfulness: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSizes {
    pub train: usize,
    pub test_normal: usize,
    /// Anomalous test clips per SNR level.
    pub test_anomalous: usize,
    pub clip_seconds: f64,
    /// Shortest and longest injected anomaly.
    pub anomaly_seconds: (f64, f64),
}

impl Default for CorpusSizes {
    fn default() -> Self {
        CorpusSizes {
            train: 40,
            test_normal: 20,
            test_anomalous: 20,
            clip_seconds: 4.0,
            anomaly_seconds: (0.5, 1.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub detectors: Vec<DetectorKind>,
    pub extractor: ExtractorSpec,
    pub snr_levels: Vec<f64>,
    pub sizes: CorpusSizes,
    /// Corpus seed.
    pub seed: u64,
    pub sample_rate: u32,
    pub spectrogram: SpectrogramParams,
    pub epsilon: f64,
    pub coreset_fraction: f64,
    pub stfpm: StfpmConfig,
    pub metrics: MetricConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            detectors: DetectorKind::ALL.to_vec(),
            extractor: ExtractorSpec::default(),
            snr_levels: vec![6.0, 0.0, -6.0],
            sizes: CorpusSizes::default(),
            seed: 7,
            sample_rate: 16000,
            spectrogram: SpectrogramParams::default(),
            epsilon: DEFAULT_EPSILON,
            coreset_fraction: DEFAULT_CORESET_FRACTION,
            stfpm: StfpmConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_levels.is_empty() || self.snr_levels.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config(format!("snr levels must be non-empty and finite, got {:?}", self.snr_levels)));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("no detectors selected".into()));
        }
        if self.sizes.train == 0 {
            return Err(Error::Config("corpus has no training clips; nothing to fit".into()));
        }
        if self.sizes.test_normal == 0 || self.sizes.test_anomalous == 0 {
            return Err(Error::Config("need normal and anomalous test clips".into()));
        }
        let (lo, hi) = self.sizes.anomaly_seconds;
        if !(lo > 0.0 && lo <= hi && hi <= self.sizes.clip_seconds) {
            return Err(Error::Config(format!(
                "anomaly length range ({lo}, {hi}) must fit inside {} s clips",
                self.sizes.clip_seconds
            )));
        }
        if !(self.metrics.smoothing_sigma >= 0.0) {
            return Err(Error::Config("smoothing sigma must be >= 0".into()));
        }
        self.spectrogram.validate(self.sample_rate)?;
        self.extractor.validate()?;
        Ok(())
    }

    pub fn detector(&self, kind: DetectorKind) -> DetectorConfig {
        DetectorConfig {
            kind,
            extractor: self.extractor.clone(),
            epsilon: self.epsilon,
            coreset_fraction: self.coreset_fraction,
            stfpm: self.stfpm,
        }
    }
}
