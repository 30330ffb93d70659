//! Sample-, spectrogram-, temporal-level and faithfulness evaluation.

mod faithfulness;
mod masks;
mod pgm;
mod report;
mod stats;
mod temporal;

pub use faithfulness::{faithfulness, masked_inputs, FaithfulnessResult};
pub use masks::{
    au_pro, connected_regions, spect_ground_truth, spect_level_metrics, spect_prediction, BinaryMask, MaskRole,
    SpectMetrics, DEFAULT_PRO_FPR_LIMIT, GT_TOP_FRACTION, PREDICTION_PERCENTILE,
};
pub use pgm::{mask_from_image, mask_image, matrix_image, GrayImage};
pub use report::{MetricsReport, ReportRow, REPORT_COLUMNS};
pub use stats::{best_f1, f1_score, mean_std, percentile, roc_auc};
pub use temporal::{temporal_ground_truth, temporal_scores, TEMPORAL_PERCENTILE, TEMPORAL_TOP_K};
