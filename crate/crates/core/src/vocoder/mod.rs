//! Analysis and re-synthesis of speech as F0, band aperiodicity and a
//! smooth spectral envelope, plus the pitch smoother that flattens
//! intonation.
//!
//! The stack is deliberately small: normalized autocorrelation F0 with a
//! window-corrected lag domain, cepstrally smoothed power envelopes and
//! per-band periodicity measured at the detected lag. Synthesis places
//! minimum-phase pulses by phase accumulation and overlap-adds shaped
//! Gaussian noise for the aperiodic part.

mod analysis;
mod f0;
mod synthesis;

pub use analysis::{analyze_with, band_index};
pub use f0::estimate_f0;
pub use synthesis::synthesize;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{FrameConfig, Waveform};
use crate::error::{Error, Result};

/// Per-frame F0 in Hz (0 where unvoiced) and the voicing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
    pub hop: usize,
    pub sample_rate: u32,
}

impl PitchContour {
    pub fn new(f0: Vec<f64>, voiced: Vec<bool>, hop: usize, sample_rate: u32) -> Result<Self> {
        if f0.len() != voiced.len() {
            return Err(Error::InvalidInput(format!(
                "f0 has {} frames, voicing mask {}",
                f0.len(),
                voiced.len()
            )));
        }
        if f0
            .iter()
            .zip(&voiced)
            .any(|(&f, &v)| v != (f > 0.0) || !f.is_finite())
        {
            return Err(Error::InvalidInput(
                "voiced frames must have f0 > 0 and unvoiced frames f0 = 0".into(),
            ));
        }
        Ok(Self {
            f0,
            voiced,
            hop,
            sample_rate,
        })
    }

    pub fn unvoiced(n: usize, hop: usize, sample_rate: u32) -> Self {
        Self {
            f0: vec![0.0; n],
            voiced: vec![false; n],
            hop,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0
            .iter()
            .zip(&self.voiced)
            .filter(|(_, &v)| v)
            .map(|(&f, _)| f)
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    pub fn voiced_mean(&self) -> Option<f64> {
        let n = self.voiced_count();
        (n > 0).then(|| self.voiced_values().sum::<f64>() / n as f64)
    }

    /// Standard deviation of voiced F0 in cents relative to the voiced
    /// log-mean. `None` with fewer than two voiced frames.
    pub fn voiced_std_cents(&self) -> Option<f64> {
        let reference = self.voiced_values().next()?;
        let cents: Vec<f64> = self
            .voiced_values()
            .map(|f| 1200.0 * (f / reference).log2())
            .collect();
        if cents.len() < 2 {
            return None;
        }
        let m = cents.iter().sum::<f64>() / cents.len() as f64;
        let var = cents.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / cents.len() as f64;
        Some(var.sqrt())
    }
}

/// T x B band aperiodicity in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Aperiodicity {
    pub ap: Array2<f64>,
    /// Upper edges (Hz) of all bands but the last, which runs to Nyquist.
    pub band_edges: Vec<f64>,
}

/// T x (fft_size/2+1) strictly positive linear envelope. Scaled so the mean
/// of `env^2` over the full FFT circle equals the frame's mean signal power.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEnvelope {
    pub env: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub pitch: PitchContour,
    pub aperiodicity: Aperiodicity,
    pub envelope: SpectralEnvelope,
    pub config_hash: String,
}

impl AnalysisResult {
    pub fn num_frames(&self) -> usize {
        self.pitch.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocoderConfig {
    pub frame: FrameConfig,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
    /// Bonus per octave for shorter lags, suppressing octave-down errors.
    pub octave_cost: f64,
    /// Path cost per octave of F0 change between neighbouring frames.
    pub octave_jump_cost: f64,
    /// Path cost of switching between voiced and unvoiced.
    pub voiced_unvoiced_cost: f64,
    /// Frames whose peak amplitude is below this share of the signal peak
    /// are treated as silent and never voiced.
    pub silence_threshold: f64,
    /// Voiced runs shorter than this many frames are marked unvoiced.
    pub min_voiced_frames: usize,
    /// Cepstral coefficients kept when smoothing the envelope.
    pub envelope_order: usize,
    /// Inner band edges in Hz; `n + 1` bands in total.
    pub band_edges: Vec<f64>,
    pub noise_seed: u64,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            f0_min: 71.0,
            f0_max: 800.0,
            voicing_threshold: 0.45,
            octave_cost: 0.01,
            octave_jump_cost: 0.35,
            voiced_unvoiced_cost: 0.14,
            silence_threshold: 0.03,
            min_voiced_frames: 3,
            envelope_order: 60,
            band_edges: vec![1000.0, 2000.0, 4000.0],
            noise_seed: 0x5eed,
        }
    }
}

impl VocoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        let nyq = self.frame.nyquist();
        if !(0.0 < self.f0_min && self.f0_min < self.f0_max && self.f0_max < nyq) {
            return Err(Error::Config(format!(
                "F0 search range must satisfy 0 < {} < {} < {nyq}",
                self.f0_min, self.f0_max
            )));
        }
        let max_lag = (self.frame.sample_rate as f64 / self.f0_min).ceil() as usize;
        if max_lag + 1 >= self.frame.frame_length / 2 {
            return Err(Error::Config(format!(
                "frame_length {} too short for f0_min {} Hz",
                self.frame.frame_length, self.f0_min
            )));
        }
        if !(0.0..1.0).contains(&self.silence_threshold) {
            return Err(Error::Config("silence_threshold must lie in [0, 1)".into()));
        }
        if !(1..self.frame.fft_size / 2).contains(&self.envelope_order) {
            return Err(Error::Config("envelope_order out of range".into()));
        }
        if self.band_edges.windows(2).any(|w| w[0] >= w[1])
            || self.band_edges.iter().any(|&e| !(0.0 < e && e < nyq))
        {
            return Err(Error::Config("band edges must increase within (0, Nyquist)".into()));
        }
        Ok(())
    }

    pub fn num_bands(&self) -> usize {
        self.band_edges.len() + 1
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Analysis/synthesis backend. [`SimpleVocoder`] is the built-in one; an
/// external binding can implement this to be compared against it.
pub trait Vocoder: Send + Sync {
    fn analyze(&self, x: &Waveform) -> Result<AnalysisResult>;
    fn synthesize(
        &self,
        pitch: &PitchContour,
        aperiodicity: &Aperiodicity,
        envelope: &SpectralEnvelope,
    ) -> Result<Waveform>;
}

#[derive(Debug, Clone, Default)]
pub struct SimpleVocoder {
    pub config: VocoderConfig,
}

impl SimpleVocoder {
    pub fn new(config: VocoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Vocoder for SimpleVocoder {
    fn analyze(&self, x: &Waveform) -> Result<AnalysisResult> {
        analyze_with(x, &self.config)
    }

    fn synthesize(
        &self,
        pitch: &PitchContour,
        aperiodicity: &Aperiodicity,
        envelope: &SpectralEnvelope,
    ) -> Result<Waveform> {
        synthesize(pitch, aperiodicity, envelope, &self.config)
    }
}

pub fn analyze(x: &Waveform, cfg: &VocoderConfig) -> Result<AnalysisResult> {
    analyze_with(x, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPitch {
    pub contour: PitchContour,
    /// Voiced mean that replaced every voiced frame; `None` when the input
    /// had no voiced frames and was returned unchanged.
    pub voiced_mean: Option<f64>,
}

/// Replaces every voiced F0 with the voiced mean. Unvoiced frames stay 0 and
/// the voicing mask is untouched.
pub fn smooth_pitch(p: &PitchContour) -> SmoothedPitch {
    let Some(mean) = p.voiced_mean() else {
        log::warn!("smooth_pitch: contour has no voiced frames, returning it unchanged");
        return SmoothedPitch {
            contour: p.clone(),
            voiced_mean: None,
        };
    };
    let f0 = p
        .f0
        .iter()
        .zip(&p.voiced)
        .map(|(&f, &v)| if v { mean } else { f })
        .collect();
    SmoothedPitch {
        contour: PitchContour {
            f0,
            voiced: p.voiced.clone(),
            hop: p.hop,
            sample_rate: p.sample_rate,
        },
        voiced_mean: Some(mean),
    }
}

/// Re-synthesizes `x` with its voiced F0 replaced by the voiced mean. The
/// output has the same length as the input.
pub fn monotonize(x: &Waveform, vocoder: &dyn Vocoder) -> Result<Waveform> {
    let analysis = vocoder.analyze(x)?;
    let smoothed = smooth_pitch(&analysis.pitch);
    let mut y = vocoder.synthesize(&smoothed.contour, &analysis.aperiodicity, &analysis.envelope)?;
    y.samples.resize(x.len(), 0.0);
    Ok(y)
}
