//! Synthetic corpora, experiment sweeps and report output.

mod config;
mod corpus;
mod experiment;
mod manifest;
mod store;

pub use config::{CorpusSizes, ExperimentConfig, MetricConfig};
pub use corpus::{build_corpus, injection_frames, MAX_REGENERATIONS};
pub use experiment::{
    emit_heatmaps, emit_maps, emit_report, evaluate_maps, load_corpus, load_maps, report_notes, run_experiment,
    score_test_clips, AnomalousClip, ExperimentOutput, LoadedCorpus, MapScorer, ModelScorer,
};
pub use manifest::{ClipEntry, DatasetManifest, Label, Regeneration, Split, MANIFEST_VERSION};
pub use store::{load_matrix, save_matrix, snr_tag};
