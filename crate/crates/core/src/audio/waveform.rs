use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mono PCM signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn scaled(&self, gain: T) -> Self {
        Waveform {
            samples: self.samples.iter().map(|&v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Writes 16-bit PCM mono. Samples are clamped to [-1, 1] and rounded.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let wav_err = |e: hound::Error| Error::Wav {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
        for &s in &self.samples {
            let v = (s.as_f64().clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v).map_err(wav_err)?;
        }
        writer.finalize().map_err(wav_err)
    }

    /// Reads a mono 16-bit PCM WAV file.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let wav_err = |message: String| Error::Wav {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(e.to_string()))?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(wav_err(format!("expected mono, found {} channels", spec.channels)));
        }
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(wav_err(format!(
                "expected 16-bit integer PCM, found {:?} {}-bit",
                spec.sample_format, spec.bits_per_sample
            )));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| T::of(v as f64 / 32767.0)))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| wav_err(e.to_string()))?;
        Waveform::new(samples, spec.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_quantizes_to_pcm16() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let w = Waveform::new(vec![0.0f64, 0.5, -0.5, 1.0, -1.0], 16000).unwrap();
        w.write_wav(&path).unwrap();
        let r = Waveform::<f64>::read_wav(&path).unwrap();
        assert_eq!(r.sample_rate, 16000);
        for (a, b) in w.samples.iter().zip(&r.samples) {
            assert!((a - b).abs() <= 0.5 / 32767.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Waveform::new(vec![0.0f32, f32::NAN], 8000).is_err());
        assert!(Waveform::new(vec![0.0f32], 0).is_err());
    }
}
