//! Signal synthesis, SNR-controlled mixing and the log-mel transform.

mod mix;
mod spectrogram;
mod synth;
mod waveform;

pub use mix::{mix_at_snr, mean_power, InjectionRecord, MixOutput};
pub use spectrogram::{log_mel_spectrogram, mel_filterbank, frame_count, hz_to_mel, mel_to_hz, Spectrogram, SpectrogramParams};
pub use synth::{synth_clip, ClipKind};
pub use waveform::Waveform;
