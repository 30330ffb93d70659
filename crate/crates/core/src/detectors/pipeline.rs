use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::map::{postprocess, reduce_map, AnomalyMap, SampleReduction};
use super::padim::{padim_fit, padim_score, GaussianField, DEFAULT_EPSILON};
use super::patchcore::{patchcore_fit, patchcore_score, MemoryBank, DEFAULT_CORESET_FRACTION};
use super::stfpm::{stfpm_train, StfpmConfig, StudentModel};
use crate::audio::Spectrogram;
use crate::error::{Error, Result};
use crate::features::{align_and_concat, CoordMap, ExtractorKind, ExtractorSpec, FeatureMapPyramid, PatchGrid, ReferenceExtractor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Padim,
    Patchcore,
    Stfpm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Padim, DetectorKind::Patchcore, DetectorKind::Stfpm];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Padim => "padim",
            DetectorKind::Patchcore => "patchcore",
            DetectorKind::Stfpm => "stfpm",
        }
    }

    /// Tag byte used in model files.
    pub fn id(self) -> u8 {
        match self {
            DetectorKind::Padim => 1,
            DetectorKind::Patchcore => 2,
            DetectorKind::Stfpm => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        DetectorKind::ALL.into_iter().find(|k| k.id() == id)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown detector '{s}' (expected padim, patchcore or stfpm)")))
    }
}

/// Everything needed to fit one detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub extractor: ExtractorSpec,
    pub epsilon: f64,
    pub coreset_fraction: f64,
    pub stfpm: StfpmConfig,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind, extractor: ExtractorSpec) -> Self {
        DetectorConfig {
            kind,
            extractor,
            epsilon: DEFAULT_EPSILON,
            coreset_fraction: DEFAULT_CORESET_FRACTION,
            stfpm: StfpmConfig::default(),
        }
    }

    /// Fits on training spectrograms through the reference extractor.
    pub fn fit<T: Scalar>(&self, train: &[Spectrogram<T>]) -> Result<FittedModel<T>> {
        if train.is_empty() {
            return Err(Error::Data("no training spectrograms".into()));
        }
        match self.kind {
            DetectorKind::Stfpm => Ok(FittedModel::Stfpm(stfpm_train(train, &self.extractor, self.stfpm)?)),
            _ => {
                let embedder = Embedder::new(&self.extractor)?;
                let grids = train.iter().map(|s| embedder.grid(s)).collect::<Result<Vec<_>>>()?;
                self.fit_grids(&grids)
            }
        }
    }

    /// Fits a patch-statistics detector directly on precomputed grids.
    pub fn fit_grids<T: Scalar>(&self, grids: &[PatchGrid<T>]) -> Result<FittedModel<T>> {
        let embedder = Embedder::new(&self.extractor)?;
        match self.kind {
            DetectorKind::Padim => Ok(FittedModel::Padim {
                embedder,
                field: padim_fit(grids, self.epsilon)?,
            }),
            DetectorKind::Patchcore => Ok(FittedModel::Patchcore {
                embedder,
                bank: patchcore_fit(grids, self.coreset_fraction)?,
            }),
            DetectorKind::Stfpm => Err(Error::Config(
                "stfpm trains on spectrograms, not precomputed embeddings".into(),
            )),
        }
    }
}

/// Turns spectrograms (reference path) or imported pyramids into patch grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder<T> {
    pub spec: ExtractorSpec,
    reference: Option<ReferenceExtractor<T>>,
}

impl<T: Scalar> Embedder<T> {
    pub fn new(spec: &ExtractorSpec) -> Result<Self> {
        spec.validate()?;
        let reference = match spec.kind {
            ExtractorKind::Reference => Some(ReferenceExtractor::new(spec)?),
            ExtractorKind::Imported => None,
        };
        Ok(Embedder {
            spec: spec.clone(),
            reference,
        })
    }

    pub fn grid(&self, s: &Spectrogram<T>) -> Result<PatchGrid<T>> {
        let reference = self.reference.as_ref().ok_or_else(|| {
            Error::Config("model was fitted on imported embeddings; score it with embeddings, not audio".into())
        })?;
        self.grid_from_pyramid(&reference.extract_selected(s)?)
    }

    pub fn grid_from_pyramid(&self, p: &FeatureMapPyramid<T>) -> Result<PatchGrid<T>> {
        align_and_concat(p, &self.spec.selected_levels)
    }
}

/// A fitted, immutable detector ready for concurrent scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel<T> {
    Padim { embedder: Embedder<T>, field: GaussianField<T> },
    Patchcore { embedder: Embedder<T>, bank: MemoryBank<T> },
    Stfpm(StudentModel<T>),
}

impl<T: Scalar> FittedModel<T> {
    pub fn kind(&self) -> DetectorKind {
        match self {
            FittedModel::Padim { .. } => DetectorKind::Padim,
            FittedModel::Patchcore { .. } => DetectorKind::Patchcore,
            FittedModel::Stfpm(_) => DetectorKind::Stfpm,
        }
    }

    pub fn extractor(&self) -> &ExtractorSpec {
        match self {
            FittedModel::Padim { embedder, .. } | FittedModel::Patchcore { embedder, .. } => &embedder.spec,
            FittedModel::Stfpm(m) => &m.teacher.spec,
        }
    }

    /// Patch-resolution map for a spectrogram.
    pub fn patch_map(&self, s: &Spectrogram<T>) -> Result<(AnomalyMap<T>, CoordMap)> {
        let (map, cm) = match self {
            FittedModel::Padim { embedder, .. } | FittedModel::Patchcore { embedder, .. } => {
                let grid = embedder.grid(s)?;
                (self.grid_map(&grid)?, grid.coord_map)
            }
            FittedModel::Stfpm(m) => m.score(s)?,
        };
        Ok((map.with_provenance(self.kind().name(), ""), cm))
    }

    /// Patch-resolution map for a precomputed grid (PaDiM and PatchCore only).
    pub fn grid_map(&self, grid: &PatchGrid<T>) -> Result<AnomalyMap<T>> {
        match self {
            FittedModel::Padim { field, .. } => padim_score(grid, field),
            FittedModel::Patchcore { bank, .. } => patchcore_score(grid, bank),
            FittedModel::Stfpm(_) => Err(Error::Config(
                "stfpm scores spectrograms, not precomputed embeddings".into(),
            )),
        }
    }

    /// Smoothed T×F map; `normalize` applies min-max scaling.
    pub fn anomaly_map(&self, s: &Spectrogram<T>, sigma: f64, normalize: bool) -> Result<AnomalyMap<T>> {
        let (m, cm) = self.patch_map(s)?;
        postprocess(&m, &cm, sigma, normalize)
    }

    /// Sample-level score of the smoothed, unnormalized map.
    pub fn sample_score(&self, s: &Spectrogram<T>, sigma: f64, how: SampleReduction) -> Result<T> {
        reduce_map(&self.anomaly_map(s, sigma, false)?, how)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SpectrogramParams;
    use crate::features::level_name;
    use crate::tensor::Matrix;

    fn spec(seed: u64) -> Spectrogram<f64> {
        let m = Matrix::from_fn(32, 16, |r, c| ((r * 7 + c * 3 + seed as usize) as f64 * 0.41).cos());
        Spectrogram::from_values(m, SpectrogramParams::default(), 16000).unwrap()
    }

    fn extractor() -> ExtractorSpec {
        ExtractorSpec {
            channels_per_block: vec![4, 4],
            selected_levels: vec![level_name(0), level_name(1)],
            ..ExtractorSpec::reference(2)
        }
    }

    #[test]
    fn kinds_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
            assert_eq!(DetectorKind::from_id(k.id()), Some(k));
        }
        assert!("cfa".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn training_clip_scores_zero_with_full_bank() {
        let mut cfg = DetectorConfig::new(DetectorKind::Patchcore, extractor());
        cfg.coreset_fraction = 1.0;
        let train = [spec(0), spec(1)];
        let model = cfg.fit(&train).unwrap();
        let (m, cm) = model.patch_map(&train[0]).unwrap();
        assert_eq!(cm.source, (32, 16));
        assert!(m.values.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(m.provenance.detector, "patchcore");
    }

    #[test]
    fn padim_maps_cover_spectrogram() {
        let cfg = DetectorConfig::new(DetectorKind::Padim, extractor());
        let model = cfg.fit(&[spec(0), spec(1), spec(2)]).unwrap();
        let m = model.anomaly_map(&spec(5), 4.0, true).unwrap();
        assert_eq!(m.values.shape(), (32, 16));
        assert!(m.values.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn padim_single_clip_is_statistics_error() {
        let cfg = DetectorConfig::new(DetectorKind::Padim, extractor());
        assert!(matches!(cfg.fit(&[spec(0)]), Err(Error::Statistics(_))));
    }

    #[test]
    fn imported_model_refuses_audio() {
        let spec_imp = ExtractorSpec {
            kind: ExtractorKind::Imported,
            ..extractor()
        };
        let cfg = DetectorConfig::new(DetectorKind::Patchcore, spec_imp);
        let reference = Embedder::<f64>::new(&extractor()).unwrap();
        let grid = reference.grid(&spec(0)).unwrap();
        let model = cfg.fit_grids(&[grid.clone()]).unwrap();
        assert!(model.grid_map(&grid).is_ok());
        assert!(matches!(model.patch_map(&spec(0)), Err(Error::Config(_))));
    }
}
