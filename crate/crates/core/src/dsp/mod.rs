//! Frame-based spectral primitives: STFT/ISTFT, mel projection, real
//! cepstrum and low-quefrency liftering.

mod cepstrum;
mod fft;
mod mel;
mod stft;

pub use cepstrum::{
    envelope_from_cepstrum, lifter_cepstrum, make_lifter, make_lifter_binarized,
    quefrency_energy_ratio, real_cepstrum, real_cepstrum_of_magnitude, Cepstrum, Lifter,
};
pub use fft::RealFft;
pub use mel::{hz_to_mel, mel_project, mel_to_hz, MelFilterbank, MelSpectrogram};
pub use stft::{istft, stft, ComplexSpectrogram};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitudes are floored at this value before any logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
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

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / n;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Hamming => "hamming",
            Window::Rectangular => "rectangular",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            "rectangular" | "rect" => Ok(Window::Rectangular),
            other => Err(Error::Config(format!("unknown window {other:?}"))),
        }
    }
}

/// Framing convention shared by every spectral operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub window: Window,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_length: 1024,
            hop_length: 256,
            fft_size: 1024,
            window: Window::Hann,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.hop_length == 0 || self.frame_length == 0 {
            return Err(Error::Config(
                "sample_rate, frame_length and hop_length must be positive".into(),
            ));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if !(self.hop_length <= self.frame_length && self.frame_length <= self.fft_size) {
            return Err(Error::Config(format!(
                "need hop_length ({}) <= frame_length ({}) <= fft_size ({})",
                self.hop_length, self.frame_length, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    /// Frequency in Hz of FFT bin `k`.
    pub fn bin_hz(&self, k: f64) -> f64 {
        k * self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn hz_to_bin(&self, hz: f64) -> f64 {
        hz * self.fft_size as f64 / self.sample_rate as f64
    }

    /// Number of frames for a signal of `len` samples: `ceil(len / hop)`.
    pub fn num_frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// T x F real matrix of spectral magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub data: Array2<f64>,
    pub scale: Scale,
    pub config: FrameConfig,
}

impl MagnitudeSpectrogram {
    pub fn new(data: Array2<f64>, scale: Scale, config: FrameConfig) -> Result<Self> {
        if scale == Scale::Linear && data.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidInput(
                "linear magnitude spectrogram has negative or NaN entries".into(),
            ));
        }
        Ok(Self {
            data,
            scale,
            config,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.data.ncols()
    }

    /// Natural-log copy with the magnitude floor applied.
    pub fn to_log(&self) -> Self {
        match self.scale {
            Scale::Log => self.clone(),
            Scale::Linear => Self {
                data: self.data.mapv(|v| v.max(LOG_FLOOR).ln()),
                scale: Scale::Log,
                config: self.config,
            },
        }
    }

    /// Per-frame spectral centroid in Hz (0 for silent frames).
    pub fn centroids_hz(&self) -> Vec<f64> {
        self.data
            .rows()
            .into_iter()
            .map(|row| spectral_centroid_hz(row.as_slice().unwrap_or(&row.to_vec()), &self.config))
            .collect()
    }
}

/// Power-weighted centroid of one magnitude frame, in Hz.
pub fn spectral_centroid_hz(frame: &[f64], cfg: &FrameConfig) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, &m) in frame.iter().enumerate() {
        let p = m * m;
        num += cfg.bin_hz(k as f64) * p;
        den += p;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}
