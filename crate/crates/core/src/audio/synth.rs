//! Seeded synthetic stand-ins for environmental backgrounds and anomalous events.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_PEAK: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipKind {
    TonalBackground,
    NoiseBackground,
    ChirpAnomaly,
    ClickAnomaly,
    ToneBurstAnomaly,
}

impl ClipKind {
    pub const BACKGROUNDS: [ClipKind; 2] = [ClipKind::TonalBackground, ClipKind::NoiseBackground];
    pub const ANOMALIES: [ClipKind; 3] = [
        ClipKind::ChirpAnomaly,
        ClipKind::ClickAnomaly,
        ClipKind::ToneBurstAnomaly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClipKind::TonalBackground => "tonal_background",
            ClipKind::NoiseBackground => "noise_background",
            ClipKind::ChirpAnomaly => "chirp_anomaly",
            ClipKind::ClickAnomaly => "click_anomaly",
            ClipKind::ToneBurstAnomaly => "tone_burst_anomaly",
        }
    }

    fn salt(self) -> u64 {
        match self {
            ClipKind::TonalBackground => 0x7a11,
            ClipKind::NoiseBackground => 0x2015e,
            ClipKind::ChirpAnomaly => 0xc41b,
            ClipKind::ClickAnomaly => 0xc11c,
            ClipKind::ToneBurstAnomaly => 0xb025,
        }
    }
}

impl fmt::Display for ClipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClipKind::BACKGROUNDS
            .iter()
            .chain(ClipKind::ANOMALIES.iter())
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown clip kind '{s}'")))
    }
}

/// Synthesizes a deterministic clip of the requested kind.
///
/// All arithmetic runs in `f64`; the result is rounded to `T` at the end so
/// `f32` and `f64` callers see the same signal up to precision.
pub fn synth_clip<T: Scalar>(
    kind: ClipKind,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Waveform<T>> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::Parameter(format!(
            "clip duration must be positive, got {duration_s}"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Parameter("sample rate must be positive".into()));
    }
    let n = ((duration_s * sample_rate as f64).round() as usize).max(1);
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.salt().wrapping_mul(0x9e37_79b9_7f4a_7c15));

    let (mut x, target_peak): (Vec<f64>, f64) = match kind {
        ClipKind::TonalBackground => (tonal(&mut rng, n, sr), rng.random_range(0.25..0.4)),
        ClipKind::NoiseBackground => (colored_noise(&mut rng, n), rng.random_range(0.25..0.4)),
        ClipKind::ChirpAnomaly => (chirp(&mut rng, n, sr), 0.8),
        ClipKind::ClickAnomaly => (clicks(&mut rng, n, sr), 0.8),
        ClipKind::ToneBurstAnomaly => (tone_burst(&mut rng, n, sr), 0.8),
    };

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = target_peak.min(MAX_PEAK) / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
    Waveform::new(x.into_iter().map(T::of).collect(), sample_rate)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn tonal(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let f0 = rng.random_range(110.0..160.0);
    let harmonics = rng.random_range(3..=6);
    let partials: Vec<(f64, f64, f64)> = (1..=harmonics)
        .map(|k| {
            let amp = rng.random_range(0.5..1.0) / k as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            (f0 * k as f64, amp, phase)
        })
        .collect();
    let am_rate = rng.random_range(0.3..2.0);
    let am_depth = rng.random_range(0.1..0.3);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let noise = 0.05;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let tone: f64 = partials
                .iter()
                .map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin())
                .sum();
            let env = 1.0 - am_depth * (0.5 + 0.5 * (2.0 * PI * am_rate * t + am_phase).sin());
            tone * env + noise * gauss(rng)
        })
        .collect()
}

fn colored_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let pole = rng.random_range(0.6..0.95);
    let mut state = 0.0;
    (0..n)
        .map(|_| {
            state = pole * state + (1.0 - pole) * gauss(rng);
            state
        })
        .collect()
}

fn fade(i: usize, n: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    let edge = i.min(n - 1 - i);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
    }
}

fn chirp(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let lo = rng.random_range(400.0..2000.0);
    let hi = rng.random_range(2500.0..6000.0);
    let (f_start, f_end) = if rng.random_bool(0.5) { (lo, hi) } else { (hi, lo) };
    let dur = n as f64 / sr;
    let slope = (f_end - f_start) / dur;
    let ramp = (0.01 * sr) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let phase = 2.0 * PI * (f_start * t + 0.5 * slope * t * t);
            phase.sin() * fade(i, n, ramp)
        })
        .collect()
}

fn clicks(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let count = rng.random_range(6..=10);
    let tau = 0.002 * sr;
    let ring = (8.0 * tau) as usize;
    let mut x = vec![0.0; n];
    for _ in 0..count {
        let at = rng.random_range(0..n);
        let freq = rng.random_range(1500.0..4000.0);
        let amp = rng.random_range(0.5..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for k in 0..ring.min(n - at) {
            let t = k as f64;
            x[at + k] += amp * (-t / tau).exp() * (2.0 * PI * freq * t / sr).sin();
        }
    }
    x
}

fn tone_burst(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let freq = rng.random_range(600.0..4000.0);
    let period = (rng.random_range(0.06..0.15) * sr) as usize;
    let on = period / 2;
    let ramp = (0.005 * sr) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let pos = i % period.max(1);
            let gate = if pos < on { fade(pos, on, ramp) } else { 0.0 };
            let tone = (2.0 * PI * freq * t).sin() + 0.1 * (4.0 * PI * freq * t).sin();
            tone * gate * fade(i, n, ramp)
        })
        .collect()
}
