//! Per-time-instant ground truth and scores.

use std::ops::Range;

use super::stats::percentile;
use crate::audio::Spectrogram;
use crate::detectors::AnomalyMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TEMPORAL_PERCENTILE: f64 = 50.0;
pub const TEMPORAL_TOP_K: usize = 5;

/// `E_t = Σ_f` of the stored (log) values; inside `interval`, instants with
/// `E_t` strictly above the interval's median are anomalous.
pub fn temporal_ground_truth<T: Scalar>(anomaly_spec: &Spectrogram<T>, interval: Range<usize>) -> Result<Vec<bool>> {
    let t = anomaly_spec.frames();
    if interval.is_empty() {
        return Err(Error::Parameter(format!("empty column interval {interval:?}")));
    }
    if interval.end > t {
        return Err(Error::Bounds(format!("interval {interval:?} exceeds {t} frames")));
    }
    let energy: Vec<T> = interval
        .clone()
        .map(|r| anomaly_spec.values.row(r).iter().copied().sum())
        .collect();
    let p = percentile(&energy, TEMPORAL_PERCENTILE)?;
    let mut out = vec![false; t];
    for (r, e) in interval.zip(energy) {
        out[r] = e > p;
    }
    Ok(out)
}

/// Mean of the five largest values at each time instant (all values when fewer than five bands).
pub fn temporal_scores<T: Scalar>(map: &AnomalyMap<T>) -> Vec<T> {
    let (rows, cols) = map.values.shape();
    let k = TEMPORAL_TOP_K.min(cols).max(1);
    (0..rows)
        .map(|r| {
            let mut v = map.values.row(r).to_vec();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            v[..k.min(v.len())].iter().copied().sum::<T>() / T::of_usize(k.min(v.len()).max(1))
        })
        .collect()
}
