//! Patch-level anomaly detectors over feature-map pyramids.

mod map;
mod padim;
mod patchcore;
mod persist;
mod pipeline;
mod stfpm;

pub use map::{postprocess, reduce_map, sample_score, AnomalyMap, Provenance, SampleReduction};
pub use padim::{cholesky, padim_fit, padim_score, spd_inverse, GaussianField, DEFAULT_EPSILON};
pub use patchcore::{
    coreset_size, greedy_k_center, nearest_distance, patchcore_fit, patchcore_score, pool_patches, MemoryBank,
    DEFAULT_CORESET_FRACTION,
};
pub use persist::{decode_model, encode_model, load_model, model_crc, save_model, AVDM_MAGIC};
pub use pipeline::{DetectorConfig, DetectorKind, Embedder, FittedModel};
pub use stfpm::{stfpm_score, stfpm_train, StfpmConfig, StudentModel, NORM_FLOOR};
