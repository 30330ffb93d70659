use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use audiovad::audio::SpectrogramParams;
use audiovad::detectors::{DetectorKind, StfpmConfig, DEFAULT_CORESET_FRACTION, DEFAULT_EPSILON};

#[derive(Debug, Parser)]
#[command(name = "audiovad", version, about = "Visual anomaly detectors on audio spectrograms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inject an anomaly WAV into a background WAV at a target SNR
    Mix(MixArgs),
    /// Compute a log-mel spectrogram (AEP1 + PGM preview)
    Spectrogram(SpectrogramArgs),
    /// Run the reference extractor and write AEP1 pyramids
    Extract(ExtractArgs),
    /// Fit a detector on normal clips and save the model
    Fit(FitArgs),
    /// Score clips or embeddings with a saved model
    Score(ScoreArgs),
    /// Compute metrics from stored anomaly maps and a manifest
    Eval(EvalArgs),
    /// Build the synthetic corpus and run every detector on it
    Bench(BenchArgs),
    /// Re-render a report as CSV/JSON, optionally with heatmaps
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Random seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory; nothing is written outside it
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AudioArgs {
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 1024)]
    pub n_fft: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
    #[arg(long, default_value_t = 64)]
    pub n_mels: usize,
}

impl AudioArgs {
    pub fn params(&self) -> SpectrogramParams {
        let d = SpectrogramParams::default();
        SpectrogramParams {
            n_fft: self.n_fft,
            hop: self.hop,
            n_mels: self.n_mels,
            fmax: d.fmax.min(self.sample_rate as f64 / 2.0),
            ..d
        }
    }

    pub fn json(&self) -> Value {
        json!({ "sample_rate": self.sample_rate, "spectrogram": self.params() })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractorArgs {
    /// Seed of the reference extractor's weights
    #[arg(long, default_value_t = 0)]
    pub extractor_seed: u64,
    /// Output channels of each conv block
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    pub channels: Vec<usize>,
    /// Pyramid levels concatenated into patch embeddings
    #[arg(long, value_delimiter = ',', default_value = "block2,block3")]
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectorArgs {
    #[arg(long, value_enum, default_value_t = DetectorChoice::Patchcore)]
    pub detector: DetectorChoice,
    #[arg(long, default_value_t = DEFAULT_CORESET_FRACTION)]
    pub coreset_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// STFPM training steps
    #[arg(long, default_value_t = StfpmConfig::default().steps)]
    pub steps: usize,
    /// STFPM learning rate
    #[arg(long, default_value_t = StfpmConfig::default().lr)]
    pub lr: f64,
    /// Map smoothing in spectrogram cells
    #[arg(long, default_value_t = 4.0)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorChoice {
    Padim,
    Patchcore,
    Stfpm,
}

impl From<DetectorChoice> for DetectorKind {
    fn from(c: DetectorChoice) -> Self {
        match c {
            DetectorChoice::Padim => DetectorKind::Padim,
            DetectorChoice::Patchcore => DetectorKind::Patchcore,
            DetectorChoice::Stfpm => DetectorKind::Stfpm,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MixArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub background: PathBuf,
    #[arg(long)]
    pub anomaly: PathBuf,
    /// Anomaly-to-background SNR in dB over the overlap
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub snr: f64,
    /// Sample offset of the anomaly in the background
    #[arg(long, default_value_t = 0)]
    pub start_sample: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrogramArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub audio: AudioArgs,
    /// Mono 16-bit WAV files
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub audio: AudioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub extractor: ExtractorArgs,
    /// Mono 16-bit WAV files
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub audio: AudioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub extractor: ExtractorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorArgs,
    /// Normal training clips: WAV files, or AEP1 embeddings for PaDiM/PatchCore
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub audio: AudioArgs,
    /// Model file written by `fit`
    #[arg(long)]
    pub model: PathBuf,
    /// Map smoothing in spectrogram cells
    #[arg(long, default_value_t = 4.0)]
    pub sigma: f64,
    /// WAV files, or AEP1 embeddings when the model was fitted on embeddings
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Corpus manifest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of `<clip_id>.aep` maps
    #[arg(long)]
    pub maps: PathBuf,
    /// Method name written in the report
    #[arg(long, default_value = "method")]
    pub method: String,
    /// Model used to rescore masked inputs for faithfulness
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Map smoothing in spectrogram cells, used when rescoring
    #[arg(long, default_value_t = 4.0)]
    pub sigma: f64,
    /// SNR levels to report (default: all levels in the manifest)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub audio: AudioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub extractor: ExtractorArgs,
    /// SNR levels in dB
    #[arg(long, value_delimiter = ',', default_value = "6,0,-6", allow_hyphen_values = true)]
    pub snr: Vec<f64>,
    /// Detectors to run (default: all)
    #[arg(long, value_enum, value_delimiter = ',', default_value = "padim,patchcore,stfpm")]
    pub detector: Vec<DetectorChoice>,
    #[arg(long, default_value_t = DEFAULT_CORESET_FRACTION)]
    pub coreset_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = StfpmConfig::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = StfpmConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = 4.0)]
    pub sigma: f64,
    /// Training clips
    #[arg(long, default_value_t = 40)]
    pub n_train: usize,
    /// Normal test clips
    #[arg(long, default_value_t = 20)]
    pub n_test_normal: usize,
    /// Anomalous test clips per SNR level
    #[arg(long, default_value_t = 20)]
    pub n_test_anomalous: usize,
    /// Clip length in seconds
    #[arg(long, default_value_t = 4.0)]
    pub clip_seconds: f64,
    /// Skip the faithfulness rescoring passes
    #[arg(long)]
    pub no_faithfulness: bool,
    /// JSON experiment config; overrides the flags above and is echoed to --out
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// report.json or report.csv to re-render
    #[arg(long)]
    pub input: PathBuf,
    /// Manifest for heatmap rendering (with --maps)
    #[arg(long, requires = "maps")]
    pub manifest: Option<PathBuf>,
    /// Directory of `<clip_id>.aep` maps for heatmap rendering
    #[arg(long, requires = "manifest")]
    pub maps: Option<PathBuf>,
}
