use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{InjectionRecord, SpectrogramParams};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

/// One clip; every path is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub clip_id: String,
    pub wav_path: String,
    pub split: Split,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<InjectionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask_path: Option<String>,
    /// One-row PGM of anomalous time instants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_gt_path: Option<String>,
    /// The background the anomaly was mixed into.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_path: Option<String>,
}

/// A corpus clip that was regenerated after a degenerate mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regeneration {
    pub clip_id: String,
    pub attempt: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawManifest {
    version: u32,
    seed: u64,
    sample_rate: u32,
    spectrogram: SpectrogramParams,
    clips: Vec<ClipEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    regenerations: Vec<Regeneration>,
}

/// Corpus description. Construction rejects anomalous training clips and
/// anomalous test clips without provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest", into = "RawManifest")]
pub struct DatasetManifest {
    raw: RawManifest,
}

#[derive(Debug)]
pub struct ManifestError(String);

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<RawManifest> for DatasetManifest {
    type Error = ManifestError;

    fn try_from(raw: RawManifest) -> std::result::Result<Self, ManifestError> {
        DatasetManifest::new(raw.seed, raw.sample_rate, raw.spectrogram, raw.clips, raw.regenerations)
            .map_err(|e| ManifestError(e.to_string()))
            .and_then(|m| {
                if raw.version != MANIFEST_VERSION {
                    Err(ManifestError(format!("unsupported manifest version {}", raw.version)))
                } else {
                    Ok(m)
                }
            })
    }
}

impl From<DatasetManifest> for RawManifest {
    fn from(m: DatasetManifest) -> Self {
        m.raw
    }
}

impl DatasetManifest {
    pub fn new(
        seed: u64,
        sample_rate: u32,
        spectrogram: SpectrogramParams,
        clips: Vec<ClipEntry>,
        regenerations: Vec<Regeneration>,
    ) -> Result<Self> {
        spectrogram.validate(sample_rate)?;
        let mut ids = std::collections::HashSet::new();
        for c in &clips {
            if !ids.insert(c.clip_id.as_str()) {
                return Err(Error::Config(format!("duplicate clip id '{}'", c.clip_id)));
            }
            match (c.split, c.label) {
                (Split::Train, Label::Anomalous) => {
                    return Err(Error::Config(format!(
                        "clip '{}': training data must be normal (unsupervised setting)",
                        c.clip_id
                    )))
                }
                (Split::Test, Label::Anomalous) if c.injection.is_none() || c.gt_mask_path.is_none() => {
                    return Err(Error::Config(format!(
                        "anomalous clip '{}' needs an injection record and a ground-truth mask",
                        c.clip_id
                    )))
                }
                _ => {}
            }
        }
        Ok(DatasetManifest {
            raw: RawManifest {
                version: MANIFEST_VERSION,
                seed,
                sample_rate,
                spectrogram,
                clips,
                regenerations,
            },
        })
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn sample_rate(&self) -> u32 {
        self.raw.sample_rate
    }

    pub fn spectrogram(&self) -> &SpectrogramParams {
        &self.raw.spectrogram
    }

    pub fn clips(&self) -> &[ClipEntry] {
        &self.raw.clips
    }

    pub fn regenerations(&self) -> &[Regeneration] {
        &self.raw.regenerations
    }

    pub fn train(&self) -> impl Iterator<Item = &ClipEntry> {
        self.raw.clips.iter().filter(|c| c.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &ClipEntry> {
        self.raw.clips.iter().filter(|c| c.split == Split::Test)
    }

    /// Distinct injection SNRs in order of first appearance.
    pub fn snr_levels(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for c in self.test() {
            if let Some(inj) = &c.injection {
                if !out.contains(&inj.snr_db) {
                    out.push(inj.snr_db);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, split: Split, label: Label) -> ClipEntry {
        ClipEntry {
            clip_id: id.into(),
            wav_path: format!("{id}.wav"),
            split,
            label,
            injection: None,
            gt_mask_path: None,
            temporal_gt_path: None,
            background_path: None,
        }
    }

    #[test]
    fn anomalous_training_clip_is_rejected() {
        let clips = vec![entry("a", Split::Train, Label::Anomalous)];
        let err = DatasetManifest::new(1, 16000, SpectrogramParams::default(), clips, vec![]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn anomalous_test_clip_needs_provenance() {
        let clips = vec![entry("a", Split::Test, Label::Anomalous)];
        assert!(DatasetManifest::new(1, 16000, SpectrogramParams::default(), clips, vec![]).is_err());
    }

    #[test]
    fn json_round_trip_runs_the_guard() {
        let m = DatasetManifest::new(
            3,
            16000,
            SpectrogramParams::default(),
            vec![entry("n0", Split::Train, Label::Normal), entry("t0", Split::Test, Label::Normal)],
            vec![],
        )
        .unwrap();
        let json = m.to_json();
        assert_eq!(serde_json::from_str::<DatasetManifest>(&json).unwrap(), m);
        let tampered = json.replacen("\"normal\"", "\"anomalous\"", 1);
        assert!(serde_json::from_str::<DatasetManifest>(&tampered).is_err());
    }
}
