//! Fit, score and evaluate detectors on a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, MetricConfig};
use super::corpus::injection_frames;
use super::manifest::{DatasetManifest, Label, Split};
use super::store::{ensure_dir, load_matrix, save_matrix};
use crate::audio::{log_mel_spectrogram, Spectrogram, Waveform};
use crate::detectors::{reduce_map, save_model, AnomalyMap, DetectorKind, FittedModel};
use crate::error::{Error, Result};
use crate::metrics::{
    best_f1, faithfulness, mask_from_image, mask_image, matrix_image, mean_std, roc_auc, spect_level_metrics,
    temporal_scores, BinaryMask, GrayImage, MaskRole, MetricsReport, ReportRow,
};
use crate::scalar::Scalar;

/// A test clip with an injected anomaly and its ground truth.
#[derive(Debug, Clone)]
pub struct AnomalousClip<T> {
    pub clip_id: String,
    pub snr_db: f64,
    pub spec: Spectrogram<T>,
    pub isolated: Spectrogram<T>,
    pub gt_mask: BinaryMask,
    pub temporal_gt: Vec<bool>,
    pub background: Option<Spectrogram<T>>,
}

/// Spectrograms of every clip in a manifest, in manifest order.
#[derive(Debug, Clone)]
pub struct LoadedCorpus<T> {
    pub train: Vec<(String, Spectrogram<T>)>,
    pub normal: Vec<(String, Spectrogram<T>)>,
    pub anomalous: Vec<AnomalousClip<T>>,
}

impl<T: Scalar> LoadedCorpus<T> {
    /// Every test clip id with its spectrogram, normal clips first.
    pub fn test_clips(&self) -> Vec<(&str, &Spectrogram<T>)> {
        self.normal
            .iter()
            .map(|(id, s)| (id.as_str(), s))
            .chain(self.anomalous.iter().map(|c| (c.clip_id.as_str(), &c.spec)))
            .collect()
    }
}

fn spectrogram_of<T: Scalar>(path: &Path, m: &DatasetManifest) -> Result<Spectrogram<T>> {
    let w = Waveform::<T>::read_wav(path)?;
    if w.sample_rate != m.sample_rate() {
        return Err(Error::Config(format!(
            "{}: sample rate {} differs from the manifest's {}",
            path.display(),
            w.sample_rate,
            m.sample_rate()
        )));
    }
    log_mel_spectrogram(&w, m.spectrogram())
}

pub fn load_corpus<T: Scalar>(manifest: &DatasetManifest, dir: &Path) -> Result<LoadedCorpus<T>> {
    let load = |split: Split, label: Label| -> Result<Vec<(String, Spectrogram<T>)>> {
        manifest
            .clips()
            .par_iter()
            .filter(|c| c.split == split && c.label == label)
            .map(|c| Ok((c.clip_id.clone(), spectrogram_of(&dir.join(&c.wav_path), manifest)?)))
            .collect()
    };
    let train = load(Split::Train, Label::Normal)?;
    let normal = load(Split::Test, Label::Normal)?;
    let anomalous = manifest
        .test()
        .filter(|c| c.label == Label::Anomalous)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|c| {
            let inj = c.injection.as_ref().expect("manifest guard");
            let spec = spectrogram_of::<T>(&dir.join(&c.wav_path), manifest)?;
            let isolated = match &inj.anomaly_spec_ref {
                Some(p) => spec.with_values(load_matrix(dir.join(p))?)?,
                None => {
                    return Err(Error::Config(format!(
                        "clip '{}' has no isolated anomaly spectrogram",
                        c.clip_id
                    )))
                }
            };
            let gt_path = dir.join(c.gt_mask_path.as_ref().expect("manifest guard"));
            let gt_mask = mask_from_image(&GrayImage::read(&gt_path)?, MaskRole::GroundTruth);
            if gt_mask.shape() != spec.values.shape() {
                return Err(Error::Shape(format!(
                    "{}: mask {:?} vs spectrogram {:?}",
                    gt_path.display(),
                    gt_mask.shape(),
                    spec.values.shape()
                )));
            }
            let temporal_gt = match &c.temporal_gt_path {
                Some(p) => mask_from_image(&GrayImage::read(dir.join(p))?, MaskRole::GroundTruth).values,
                None => {
                    let frames = injection_frames(inj, manifest.spectrogram(), spec.frames());
                    crate::metrics::temporal_ground_truth(&isolated, frames)?
                }
            };
            let background = match &c.background_path {
                Some(p) => Some(spectrogram_of(&dir.join(p), manifest)?),
                None => None,
            };
            Ok(AnomalousClip {
                clip_id: c.clip_id.clone(),
                snr_db: inj.snr_db,
                spec,
                isolated,
                gt_mask,
                temporal_gt,
                background,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if train.is_empty() {
        return Err(Error::Config("manifest has no training clips".into()));
    }
    Ok(LoadedCorpus { train, normal, anomalous })
}

/// Something that maps a spectrogram to a T×F anomaly map (smoothed, not normalized).
pub trait MapScorer<T>: Sync {
    fn map(&self, s: &Spectrogram<T>) -> Result<AnomalyMap<T>>;
}

impl<T: Scalar, F: Fn(&Spectrogram<T>) -> Result<AnomalyMap<T>> + Sync> MapScorer<T> for F {
    fn map(&self, s: &Spectrogram<T>) -> Result<AnomalyMap<T>> {
        self(s)
    }
}

/// A fitted model with its post-processing.
pub struct ModelScorer<'a, T> {
    pub model: &'a FittedModel<T>,
    pub sigma: f64,
}

impl<T: Scalar> MapScorer<T> for ModelScorer<'_, T> {
    fn map(&self, s: &Spectrogram<T>) -> Result<AnomalyMap<T>> {
        self.model.anomaly_map(s, self.sigma, false)
    }
}

/// Raw maps for every test clip, keyed by clip id.
pub fn score_test_clips<T: Scalar>(
    scorer: &dyn MapScorer<T>,
    corpus: &LoadedCorpus<T>,
) -> Result<BTreeMap<String, AnomalyMap<T>>> {
    corpus
        .test_clips()
        .par_iter()
        .map(|(id, s)| {
            let m = scorer.map(s).map_err(|e| Error::Data(format!("scoring clip '{id}': {e}")))?;
            Ok((id.to_string(), m))
        })
        .collect()
}

fn metric<V>(r: Result<V>, what: &str, method: &str, snr: f64, diag: &mut Vec<String>) -> Option<V> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            diag.push(format!("{method} @ {snr} dB: {what}: {e}"));
            None
        }
    }
}

/// Metric rows for one detector, one per SNR level, from precomputed maps.
/// Faithfulness is computed only when `rescore` is given.
pub fn evaluate_maps<T: Scalar>(
    method: &str,
    maps: &BTreeMap<String, AnomalyMap<T>>,
    corpus: &LoadedCorpus<T>,
    snr_levels: &[f64],
    cfg: &MetricConfig,
    rescore: Option<&dyn MapScorer<T>>,
) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let get = |id: &str| {
        maps.get(id)
            .ok_or_else(|| Error::Data(format!("no anomaly map for clip '{id}'")))
    };
    let normal_scores = corpus
        .normal
        .iter()
        .map(|(id, _)| reduce_map(get(id)?, cfg.sample_reduction))
        .collect::<Result<Vec<T>>>()?;

    let mut rows = Vec::new();
    let mut diag = Vec::new();
    for &snr in snr_levels {
        let mut row = ReportRow::empty(method, snr);
        let clips: Vec<&AnomalousClip<T>> = corpus.anomalous.iter().filter(|c| c.snr_db == snr).collect();
        if clips.is_empty() {
            diag.push(format!("{method} @ {snr} dB: no anomalous clips at this level"));
            rows.push(row);
            continue;
        }
        let raw: Vec<AnomalyMap<T>> = clips.iter().map(|c| get(&c.clip_id).cloned()).collect::<Result<_>>()?;

        let mut scores = normal_scores.clone();
        let mut labels = vec![false; scores.len()];
        for m in &raw {
            scores.push(reduce_map(m, cfg.sample_reduction)?);
            labels.push(true);
        }
        row.sample_roc = metric(roc_auc(&scores, &labels), "sample ROC", method, snr, &mut diag);
        row.sample_f1 = metric(best_f1(&scores, &labels), "sample F1", method, snr, &mut diag).map(|f| f.0);

        let gts: Vec<BinaryMask> = clips.iter().map(|c| c.gt_mask.clone()).collect();
        if let Some(s) = metric(spect_level_metrics(&raw, &gts, cfg.pro_fpr_limit), "spectrogram metrics", method, snr, &mut diag) {
            row.spect_f1 = Some(s.f1);
            row.spect_roc = Some(s.roc);
            row.spect_pro = Some(s.pro);
        }

        let mut t_scores = Vec::new();
        let mut t_labels = Vec::new();
        for (m, c) in raw.iter().zip(&clips) {
            t_scores.extend(temporal_scores(&m.normalized()));
            t_labels.extend_from_slice(&c.temporal_gt);
        }
        row.temp_roc = metric(roc_auc(&t_scores, &t_labels), "temporal ROC", method, snr, &mut diag);
        row.temp_f1 = metric(best_f1(&t_scores, &t_labels), "temporal F1", method, snr, &mut diag).map(|f| f.0);

        if let Some(scorer) = rescore {
            let ff = clips
                .par_iter()
                .zip(raw.par_iter())
                .map(|(c, m)| {
                    let bg = c.background.as_ref().ok_or_else(|| {
                        Error::Data(format!("clip '{}' has no background for faithfulness", c.clip_id))
                    })?;
                    let f = |s: &Spectrogram<T>| reduce_map(&scorer.map(s)?, cfg.sample_reduction);
                    faithfulness(f, &c.spec, &m.normalized(), bg)
                })
                .collect::<Result<Vec<_>>>();
            if let Some(ff) = metric(ff, "faithfulness", method, snr, &mut diag) {
                let v1: Vec<f64> = ff.iter().map(|r| r.ff_v1).collect();
                let v2: Vec<f64> = ff.iter().map(|r| r.ff_v2).collect();
                (row.ff_v1_mean, row.ff_v1_std) = mean_std(&v1).unzip();
                (row.ff_v2_mean, row.ff_v2_std) = mean_std(&v2).unzip();
            }
        }
        rows.push(row);
    }
    Ok((rows, diag))
}

/// Conventions recorded in every report.
pub fn report_notes(cfg: &MetricConfig) -> Vec<String> {
    vec![
        format!(
            "maps are bilinearly upsampled to TxF and smoothed with a Gaussian of sigma {} cells",
            cfg.smoothing_sigma
        ),
        format!("sample score: {} of the smoothed, unnormalized map", cfg.sample_reduction),
        "spectrogram predictions threshold each min-max normalized map at its 40th percentile (strict)".into(),
        "spectrogram ROC and AU-PRO use the smoothed, unnormalized maps pooled over anomalous clips".into(),
        format!("AU-PRO integrates to FPR {} with 4-connected regions", cfg.pro_fpr_limit),
        "temporal ground truth sums stored log-mel values per frame; scores are top-5 means of normalized maps".into(),
        "sample and temporal F1 use the best threshold over all distinct scores".into(),
        "faithfulness masks spectrogram values with the normalized map; std is the population std".into(),
    ]
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    /// CRC32 of each saved model file.
    pub model_crcs: Vec<(DetectorKind, u32)>,
}

fn run_one<T: Scalar>(
    kind: DetectorKind,
    corpus: &LoadedCorpus<T>,
    cfg: &ExperimentConfig,
    snr_levels: &[f64],
    out: &Path,
) -> Result<(Vec<ReportRow>, Vec<String>, u32)> {
    let train: Vec<Spectrogram<T>> = corpus.train.iter().map(|(_, s)| s.clone()).collect();
    let model = cfg.detector(kind).fit(&train)?;
    ensure_dir(&out.join("models"))?;
    let crc = save_model(&model, out.join("models").join(format!("{kind}.avdm")))?;
    let scorer = ModelScorer {
        model: &model,
        sigma: cfg.metrics.smoothing_sigma,
    };
    let maps = score_test_clips(&scorer, corpus)?;
    emit_maps(&maps, &out.join("maps").join(kind.name()))?;
    emit_heatmaps(&maps, corpus, &out.join("heatmaps").join(kind.name()))?;
    let rescore = cfg.metrics.faithfulness.then_some(&scorer as &dyn MapScorer<T>);
    let (rows, diag) = evaluate_maps(kind.name(), &maps, corpus, snr_levels, &cfg.metrics, rescore)?;
    Ok((rows, diag, crc))
}

/// Fits every configured detector on the training split, scores the test
/// split, and writes models, maps, heatmaps and the report under `out`.
/// A detector that fails contributes a diagnostic instead of rows.
pub fn run_experiment<T: Scalar>(
    manifest: &DatasetManifest,
    manifest_dir: &Path,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    ensure_dir(out)?;
    let corpus = load_corpus::<T>(manifest, manifest_dir)?;
    let snr_levels: Vec<f64> = cfg
        .snr_levels
        .iter()
        .copied()
        .filter(|s| manifest.snr_levels().contains(s))
        .collect();
    let mut report = MetricsReport {
        notes: report_notes(&cfg.metrics),
        ..Default::default()
    };
    for s in &cfg.snr_levels {
        if !snr_levels.contains(s) {
            report.diagnostics.push(format!("SNR {s} dB is not present in the manifest"));
        }
    }
    let mut model_crcs = Vec::new();
    for &kind in &cfg.detectors {
        match run_one(kind, &corpus, cfg, &snr_levels, out) {
            Ok((rows, diag, crc)) => {
                report.rows.extend(rows);
                report.diagnostics.extend(diag);
                model_crcs.push((kind, crc));
            }
            Err(e) => report.diagnostics.push(format!("{kind}: aborted: {e}")),
        }
    }
    emit_report(&report, out)?;
    Ok(ExperimentOutput { report, model_crcs })
}

/// `report.csv` and `report.json` under `out`.
pub fn emit_report(report: &MetricsReport, out: &Path) -> Result<(PathBuf, PathBuf)> {
    ensure_dir(out)?;
    let csv = out.join("report.csv");
    let json = out.join("report.json");
    report.write_csv(&csv)?;
    report.write_json(&json)?;
    Ok((csv, json))
}

/// Each map as a float32 single-level `AEP1` file named after its clip.
pub fn emit_maps<T: Scalar>(maps: &BTreeMap<String, AnomalyMap<T>>, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    maps.par_iter()
        .try_for_each(|(id, m)| save_matrix(&m.values, dir.join(format!("{id}.aep"))))
}

/// Reads maps written by [`emit_maps`] for the given clip ids.
pub fn load_maps<T: Scalar>(dir: &Path, ids: &[&str]) -> Result<BTreeMap<String, AnomalyMap<T>>> {
    ids.par_iter()
        .map(|id| Ok((id.to_string(), AnomalyMap::new(load_matrix(dir.join(format!("{id}.aep")))?))))
        .collect()
}

/// Three stacked panels per anomalous clip (mixed spectrogram, isolated
/// anomaly spectrogram, anomaly map) plus the ground-truth mask as a fourth.
pub fn emit_heatmaps<T: Scalar>(
    maps: &BTreeMap<String, AnomalyMap<T>>,
    corpus: &LoadedCorpus<T>,
    dir: &Path,
) -> Result<()> {
    ensure_dir(dir)?;
    corpus.anomalous.par_iter().try_for_each(|c| {
        let Some(m) = maps.get(&c.clip_id) else {
            return Ok(());
        };
        let panels = [
            matrix_image(&c.spec.values),
            matrix_image(&c.isolated.values),
            matrix_image(&m.values),
        ];
        GrayImage::stack(&panels, 2)?.write(dir.join(format!("{}.pgm", c.clip_id)))?;
        mask_image(&c.gt_mask).write(dir.join(format!("{}_gt.pgm", c.clip_id)))
    })
}
