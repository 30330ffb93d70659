use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramParams {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_offset: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        SpectrogramParams {
            n_fft: 1024,
            hop: 512,
            n_mels: 64,
            fmin: 50.0,
            fmax: 8000.0,
            log_offset: 1e-6,
        }
    }
}

impl SpectrogramParams {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.n_fft == 0 || self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Parameter(format!(
                "need 0 < hop <= n_fft, got hop {} n_fft {}",
                self.hop, self.n_fft
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::Parameter("n_mels must be at least 1".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::Parameter(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin {} fmax {}",
                self.fmin, self.fmax
            )));
        }
        if !(self.log_offset > 0.0) {
            return Err(Error::Parameter("log_offset must be positive".into()));
        }
        Ok(())
    }
}

/// T×F log-mel grid: rows are frames (time), columns are mel bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    pub values: Matrix<T>,
    pub params: SpectrogramParams,
    pub sample_rate: u32,
}

impl<T: Scalar> Spectrogram<T> {
    /// Wraps an existing grid (imported, masked or synthetic). Only finiteness is checked.
    pub fn from_values(values: Matrix<T>, params: SpectrogramParams, sample_rate: u32) -> Result<Self> {
        if let Some(i) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite spectrogram value at flat index {i}")));
        }
        Ok(Spectrogram {
            values,
            params,
            sample_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn bands(&self) -> usize {
        self.values.cols()
    }

    /// Same params and rate, new values.
    pub fn with_values(&self, values: Matrix<T>) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::Shape(format!(
                "expected {:?}, got {:?}",
                self.values.shape(),
                values.shape()
            )));
        }
        Spectrogram::from_values(values, self.params, self.sample_rate)
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Number of full frames: `1 + (len - n_fft) / hop`, or 0 when the clip is shorter than a frame.
pub fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    if len < n_fft || hop == 0 {
        0
    } else {
        1 + (len - n_fft) / hop
    }
}

/// Triangular HTK-spaced filterbank, `n_mels` rows × `n_fft/2 + 1` bins, peak weight 1.
pub fn mel_filterbank(p: &SpectrogramParams, sample_rate: u32) -> Matrix<f64> {
    let bins = p.n_fft / 2 + 1;
    let lo = hz_to_mel(p.fmin);
    let hi = hz_to_mel(p.fmax);
    let edges: Vec<f64> = (0..p.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (p.n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / p.n_fft as f64;
    Matrix::from_fn(p.n_mels, bins, |m, k| {
        let f = k as f64 * bin_hz;
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let up = (f - left) / (center - left);
        let down = (right - f) / (right - center);
        up.min(down).max(0.0)
    })
}

/// Hann-windowed power STFT → mel filterbank → `ln(energy + log_offset)`.
pub fn log_mel_spectrogram<T: Scalar>(w: &Waveform<T>, p: &SpectrogramParams) -> Result<Spectrogram<T>> {
    p.validate(w.sample_rate)?;
    if w.len() < p.n_fft {
        return Err(Error::Length(format!(
            "clip of {} samples is shorter than one {}-sample frame",
            w.len(),
            p.n_fft
        )));
    }
    let frames = frame_count(w.len(), p.n_fft, p.hop);
    let bins = p.n_fft / 2 + 1;

    // Sparse filter rows: (first nonzero bin, weights).
    let fb = mel_filterbank(p, w.sample_rate);
    let filters: Vec<(usize, Vec<T>)> = (0..p.n_mels)
        .map(|m| {
            let row = fb.row(m);
            let first = row.iter().position(|&v| v > 0.0).unwrap_or(0);
            let last = row.iter().rposition(|&v| v > 0.0).map_or(0, |i| i + 1);
            (first, row[first..last.max(first)].iter().map(|&v| T::of(v)).collect())
        })
        .collect();

    let window: Vec<T> = (0..p.n_fft)
        .map(|n| T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / p.n_fft as f64).cos()))
        .collect();
    let fft = FftPlanner::<T>::new().plan_fft_forward(p.n_fft);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); p.n_fft];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let mut power = vec![T::zero(); bins];
    let offset = T::of(p.log_offset);

    let mut values = Matrix::zeros(frames, p.n_mels);
    for t in 0..frames {
        let frame = &w.samples[t * p.hop..t * p.hop + p.n_fft];
        for ((b, &s), &win) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(s * win, T::zero());
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (pw, c) in power.iter_mut().zip(&buf) {
            *pw = c.norm_sqr();
        }
        let row = values.row_mut(t);
        for (m, (first, weights)) in filters.iter().enumerate() {
            let energy: T = weights
                .iter()
                .zip(&power[*first..])
                .map(|(&wgt, &pw)| wgt * pw)
                .sum();
            row[m] = (energy + offset).ln();
        }
    }
    Spectrogram::from_values(values, *p, w.sample_rate)
}
