use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Provenance of one anomaly injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub anomaly_id: String,
    pub t_start_sample: usize,
    /// Exclusive end of the overlap window.
    pub t_end_sample: usize,
    pub snr_db: f64,
    pub scale_alpha: f64,
    /// Path (relative to the manifest) of the isolated scaled-anomaly spectrogram.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly_spec_ref: Option<String>,
    /// Samples that were hard-clipped to [-1, 1] after mixing.
    pub clip_count: usize,
}

#[derive(Debug, Clone)]
pub struct MixOutput<T> {
    pub mixed: Waveform<T>,
    pub record: InjectionRecord,
    /// The scaled anomaly placed at its offset in an otherwise silent clip.
    pub isolated: Waveform<T>,
}

/// Mean squared amplitude, accumulated in `f64`.
pub fn mean_power<T: Scalar>(x: &[T]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / x.len() as f64
}

/// Adds `anomaly` into `background` starting at `t_start_sample`, scaled so the
/// anomaly-to-background power ratio over the overlap window equals `snr_db`.
pub fn mix_at_snr<T: Scalar>(
    background: &Waveform<T>,
    anomaly: &Waveform<T>,
    anomaly_id: &str,
    snr_db: f64,
    t_start_sample: usize,
) -> Result<MixOutput<T>> {
    if background.sample_rate != anomaly.sample_rate {
        return Err(Error::Parameter(format!(
            "sample rates differ: background {} Hz, anomaly {} Hz",
            background.sample_rate, anomaly.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Parameter(format!("snr must be finite, got {snr_db}")));
    }
    if anomaly.is_empty() {
        return Err(Error::DegenerateSignal("anomaly clip is empty".into()));
    }
    let end = t_start_sample
        .checked_add(anomaly.len())
        .filter(|&e| e <= background.len())
        .ok_or_else(|| {
            Error::Bounds(format!(
                "anomaly of {} samples at offset {t_start_sample} exceeds background of {} samples",
                anomaly.len(),
                background.len()
            ))
        })?;

    let window = &background.samples[t_start_sample..end];
    let p_bg = mean_power(window);
    let p_anom = mean_power(&anomaly.samples);
    if p_bg <= 0.0 {
        return Err(Error::DegenerateSignal(
            "background has zero power over the injection window".into(),
        ));
    }
    if p_anom <= 0.0 {
        return Err(Error::DegenerateSignal("anomaly has zero power".into()));
    }

    let alpha = (10f64.powf(snr_db / 10.0) * p_bg / p_anom).sqrt();
    let alpha_t = T::of(alpha);
    let one = T::one();

    let mut mixed = background.samples.clone();
    let mut isolated = vec![T::zero(); background.len()];
    let mut clip_count = 0;
    for (k, &a) in anomaly.samples.iter().enumerate() {
        let i = t_start_sample + k;
        let scaled = alpha_t * a;
        isolated[i] = scaled;
        let v = mixed[i] + scaled;
        mixed[i] = if v > one {
            clip_count += 1;
            one
        } else if v < -one {
            clip_count += 1;
            -one
        } else {
            v
        };
    }

    Ok(MixOutput {
        mixed: Waveform::new(mixed, background.sample_rate)?,
        isolated: Waveform::new(isolated, background.sample_rate)?,
        record: InjectionRecord {
            anomaly_id: anomaly_id.to_string(),
            t_start_sample,
            t_end_sample: end,
            snr_db,
            scale_alpha: alpha,
            anomaly_spec_ref: None,
            clip_count,
        },
    })
}
