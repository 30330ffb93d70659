//! Deterministic synthetic corpus: normal backgrounds for training and test,
//! plus backgrounds with one injected anomaly per clip at each SNR level.

use std::ops::Range;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::manifest::{ClipEntry, DatasetManifest, Label, Regeneration, Split};
use super::store::{ensure_dir, save_matrix, snr_tag};
use crate::audio::{log_mel_spectrogram, mix_at_snr, synth_clip, ClipKind, InjectionRecord, SpectrogramParams, Waveform};
use crate::error::{Error, Result};
use crate::features::CellRect;
use crate::metrics::{mask_image, spect_ground_truth, temporal_ground_truth, BinaryMask, MaskRole};
use crate::scalar::Scalar;

pub const MAX_REGENERATIONS: u32 = 5;

const TAG_TRAIN: u64 = 1;
const TAG_TEST_NORMAL: u64 = 2;
const TAG_ANOMALOUS: u64 = 3;

/// Independent per-clip seed derived from the corpus seed.
fn sub_seed(seed: u64, tag: u64, index: usize, attempt: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) ^ ((attempt as u64) << 40) ^ index as u64);
    rng.next_u64()
}

/// Spectrogram frames whose analysis window overlaps samples `[start, end)`.
pub fn injection_frames(record: &InjectionRecord, p: &SpectrogramParams, n_frames: usize) -> Range<usize> {
    let lo = (record.t_start_sample + 1).saturating_sub(p.n_fft).div_ceil(p.hop);
    let hi = if record.t_end_sample == 0 {
        0
    } else {
        ((record.t_end_sample - 1) / p.hop + 1).min(n_frames)
    };
    lo.min(hi)..hi
}

fn background<T: Scalar>(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Result<Waveform<T>> {
    let kind = ClipKind::BACKGROUNDS[rng.random_range(0..ClipKind::BACKGROUNDS.len())];
    synth_clip(kind, cfg.sizes.clip_seconds, cfg.sample_rate, rng.next_u64())
}

struct Written {
    entries: Vec<ClipEntry>,
    regenerations: Vec<Regeneration>,
}

fn write_normal<T: Scalar>(cfg: &ExperimentConfig, seed: u64, dir: &Path, split: Split, i: usize) -> Result<ClipEntry> {
    let (tag, prefix) = match split {
        Split::Train => (TAG_TRAIN, "train"),
        Split::Test => (TAG_TEST_NORMAL, "normal"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, tag, i, 0));
    let w = background::<T>(&mut rng, cfg)?;
    let clip_id = format!("{prefix}_{i:03}");
    let wav_path = format!("wav/{clip_id}.wav");
    w.write_wav(dir.join(&wav_path))?;
    Ok(ClipEntry {
        clip_id,
        wav_path,
        split,
        label: Label::Normal,
        injection: None,
        gt_mask_path: None,
        temporal_gt_path: None,
        background_path: None,
    })
}

fn write_anomalous<T: Scalar>(cfg: &ExperimentConfig, seed: u64, dir: &Path, i: usize) -> Result<Written> {
    let mut regenerations = Vec::new();
    let mut attempt = 0;
    loop {
        match try_anomalous::<T>(cfg, seed, dir, i, attempt) {
            Err(Error::DegenerateSignal(reason)) if attempt < MAX_REGENERATIONS => {
                regenerations.push(Regeneration {
                    clip_id: format!("anomalous_{i:03}"),
                    attempt,
                    reason,
                });
                attempt += 1;
            }
            Err(Error::DegenerateSignal(reason)) => {
                return Err(Error::DegenerateSignal(format!(
                    "anomalous clip {i} still degenerate after {MAX_REGENERATIONS} regenerations: {reason}"
                )))
            }
            Err(e) => return Err(e),
            Ok(entries) => return Ok(Written { entries, regenerations }),
        }
    }
}

fn try_anomalous<T: Scalar>(cfg: &ExperimentConfig, seed: u64, dir: &Path, i: usize, attempt: u32) -> Result<Vec<ClipEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, TAG_ANOMALOUS, i, attempt));
    let bg = background::<T>(&mut rng, cfg)?;
    let kind = ClipKind::ANOMALIES[rng.random_range(0..ClipKind::ANOMALIES.len())];
    let (lo, hi) = cfg.sizes.anomaly_seconds;
    let secs = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let anomaly_seed = rng.next_u64();
    let anomaly = synth_clip::<T>(kind, secs, cfg.sample_rate, anomaly_seed)?;
    let start = rng.random_range(0..=bg.len().saturating_sub(anomaly.len()));
    let anomaly_id = format!("{kind}#{anomaly_seed:016x}");

    let bg_path = format!("wav/background_{i:03}.wav");
    let mut entries = Vec::with_capacity(cfg.snr_levels.len());
    let mut pending = Vec::with_capacity(cfg.snr_levels.len());
    for &snr in &cfg.snr_levels {
        // mix everything first so a degenerate case writes nothing
        pending.push((snr, mix_at_snr(&bg, &anomaly, &anomaly_id, snr, start)?));
    }
    bg.write_wav(dir.join(&bg_path))?;
    for (snr, mix) in pending {
        let clip_id = format!("anomalous_{}_{i:03}", snr_tag(snr));
        let wav_path = format!("wav/{clip_id}.wav");
        let spec_path = format!("spec/{clip_id}_isolated.aep");
        let mask_path = format!("gt/{clip_id}_mask.pgm");
        let temporal_path = format!("gt/{clip_id}_temporal.pgm");

        let isolated = log_mel_spectrogram(&mix.isolated, &cfg.spectrogram)?;
        let frames = injection_frames(&mix.record, &cfg.spectrogram, isolated.frames());
        let region = CellRect::new(frames.start, frames.end, 0, isolated.bands());
        let mask = spect_ground_truth(&isolated, region)?;
        let temporal = temporal_ground_truth(&isolated, frames)?;
        let temporal_mask = BinaryMask {
            rows: temporal.len(),
            cols: 1,
            values: temporal,
            role: MaskRole::GroundTruth,
        };

        mix.mixed.write_wav(dir.join(&wav_path))?;
        save_matrix(&isolated.values, dir.join(&spec_path))?;
        mask_image(&mask).write(dir.join(&mask_path))?;
        mask_image(&temporal_mask).write(dir.join(&temporal_path))?;

        let mut record = mix.record;
        record.anomaly_spec_ref = Some(spec_path);
        entries.push(ClipEntry {
            clip_id,
            wav_path,
            split: Split::Test,
            label: Label::Anomalous,
            injection: Some(record),
            gt_mask_path: Some(mask_path),
            temporal_gt_path: Some(temporal_path),
            background_path: Some(bg_path.clone()),
        });
    }
    Ok(entries)
}

/// Generates the corpus under `dir` and writes `dir/manifest.json`.
pub fn build_corpus<T: Scalar>(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    for sub in ["", "wav", "spec", "gt"] {
        ensure_dir(&dir.join(sub))?;
    }
    let train = (0..cfg.sizes.train)
        .into_par_iter()
        .map(|i| write_normal::<T>(cfg, seed, dir, Split::Train, i))
        .collect::<Result<Vec<_>>>()?;
    let normal = (0..cfg.sizes.test_normal)
        .into_par_iter()
        .map(|i| write_normal::<T>(cfg, seed, dir, Split::Test, i))
        .collect::<Result<Vec<_>>>()?;
    let anomalous = (0..cfg.sizes.test_anomalous)
        .into_par_iter()
        .map(|i| write_anomalous::<T>(cfg, seed, dir, i))
        .collect::<Result<Vec<_>>>()?;

    let mut clips = train;
    clips.extend(normal);
    let mut regenerations = Vec::new();
    // group anomalous clips by SNR level, then by index
    for s in 0..cfg.snr_levels.len() {
        for w in &anomalous {
            clips.push(w.entries[s].clone());
        }
    }
    for w in anomalous {
        regenerations.extend(w.regenerations);
    }
    let manifest = DatasetManifest::new(seed, cfg.sample_rate, cfg.spectrogram, clips, regenerations)?;
    manifest.write(dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_cover_overlapping_windows() {
        let p = SpectrogramParams::default();
        let rec = |s, e| InjectionRecord {
            anomaly_id: String::new(),
            t_start_sample: s,
            t_end_sample: e,
            snr_db: 0.0,
            scale_alpha: 1.0,
            anomaly_spec_ref: None,
            clip_count: 0,
        };
        // frame t covers [512 t, 512 t + 1024)
        assert_eq!(injection_frames(&rec(0, 1), &p, 100), 0..1);
        assert_eq!(injection_frames(&rec(1024, 1025), &p, 100), 1..3);
        assert_eq!(injection_frames(&rec(1023, 1024), &p, 100), 0..2);
        assert_eq!(injection_frames(&rec(5000, 60000), &p, 20), 8..20);
    }

    #[test]
    fn sub_seeds_differ_by_tag_index_and_attempt() {
        let a = sub_seed(7, 1, 0, 0);
        assert_ne!(a, sub_seed(7, 2, 0, 0));
        assert_ne!(a, sub_seed(7, 1, 1, 0));
        assert_ne!(a, sub_seed(7, 1, 0, 1));
        assert_eq!(a, sub_seed(7, 1, 0, 0));
    }
}
