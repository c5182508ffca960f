//! Synthetic test signals: formant-filtered harmonic vowels with optional
//! vibrato, syllable gating and aspiration noise, plus seeded noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::dsp::Waveform;

/// (centre Hz, bandwidth Hz) for an /a/-like vowel.
pub const VOWEL_A: [(f64, f64); 3] = [(750.0, 90.0), (1250.0, 110.0), (2500.0, 160.0)];

#[derive(Debug, Clone)]
pub struct VowelSpec {
    pub f0: f64,
    /// Peak vibrato deviation in cents (0 for a monotone vowel).
    pub vibrato_cents: f64,
    pub vibrato_hz: f64,
    pub formants: Vec<(f64, f64)>,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Aspiration noise RMS relative to the voiced part.
    pub noise_level: f64,
    /// Number of syllable-like bursts separated by short pauses; 0 for a
    /// steady vowel.
    pub syllables: usize,
    pub rms: f64,
    pub seed: u64,
}

impl Default for VowelSpec {
    fn default() -> Self {
        Self {
            f0: 220.0,
            vibrato_cents: 0.0,
            vibrato_hz: 5.5,
            formants: VOWEL_A.to_vec(),
            duration_s: 1.0,
            sample_rate: 16_000,
            noise_level: 0.0,
            syllables: 0,
            rms: 0.1,
            seed: 1,
        }
    }
}

impl VowelSpec {
    pub fn vibrato(mut self, cents: f64) -> Self {
        self.vibrato_cents = cents;
        self
    }

    pub fn f0(mut self, f0: f64) -> Self {
        self.f0 = f0;
        self
    }

    pub fn duration(mut self, secs: f64) -> Self {
        self.duration_s = secs;
        self
    }

    pub fn noise(mut self, level: f64) -> Self {
        self.noise_level = level;
        self
    }

    pub fn syllables(mut self, n: usize) -> Self {
        self.syllables = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Instantaneous F0 at time `t` seconds.
    pub fn f0_at(&self, t: f64) -> f64 {
        self.f0 * 2f64.powf(self.vibrato_cents / 1200.0 * (2.0 * PI * self.vibrato_hz * t).sin())
    }

    /// Syllable gate in [0, 1]: raised-cosine bursts filling 75% of each slot.
    pub fn gate_at(&self, t: f64) -> f64 {
        if self.syllables == 0 {
            return 1.0;
        }
        let slot = self.duration_s / self.syllables as f64;
        let pos = (t % slot) / slot;
        if pos < 0.75 {
            (PI * pos / 0.75).sin().powf(0.5)
        } else {
            0.0
        }
    }

    pub fn render(&self) -> Waveform {
        let sr = self.sample_rate as f64;
        let n = (self.duration_s * sr).round() as usize;
        let mut phase = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut source = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / sr;
            let f = self.f0_at(t);
            phase += f / sr;
            // Flat-spectrum band-limited pulse: sum of harmonics below Nyquist.
            let harmonics = ((sr / 2.0 - 1.0) / f).floor() as usize;
            let mut v = 0.0;
            for h in 1..=harmonics {
                v += (2.0 * PI * h as f64 * phase).cos();
            }
            source.push(v);
            noise.push(StandardNormal.sample(&mut rng));
        }
        let voiced_rms = rms(&source);
        let noise_rms = rms(&noise);
        let mixed: Vec<f64> = source
            .iter()
            .zip(&noise)
            .map(|(s, e)| s / voiced_rms + self.noise_level * e / noise_rms)
            .collect();
        let mut y = mixed;
        for &(fc, bw) in &self.formants {
            y = resonator(&y, fc, bw, sr);
        }
        for (i, v) in y.iter_mut().enumerate() {
            *v *= self.gate_at(i as f64 / sr);
        }
        let r = rms(&y);
        if r > 0.0 {
            for v in &mut y {
                *v *= self.rms / r;
            }
        }
        Waveform::new(y, self.sample_rate)
    }
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Two-pole resonator with unit gain at DC.
pub fn resonator(x: &[f64], centre: f64, bandwidth: f64, sr: f64) -> Vec<f64> {
    let r = (-PI * bandwidth / sr).exp();
    let theta = 2.0 * PI * centre / sr;
    let a1 = 2.0 * r * theta.cos();
    let a2 = -r * r;
    let gain = 1.0 - a1 - a2;
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = gain * v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

pub fn white_noise(duration_s: f64, sample_rate: u32, rms_level: f64, seed: u64) -> Waveform {
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            rms_level * e
        })
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Gated noise bursts: `bursts` raised-cosine bursts over the duration.
pub fn noise_bursts(duration_s: f64, sample_rate: u32, bursts: usize, seed: u64) -> Waveform {
    let mut w = white_noise(duration_s, sample_rate, 0.1, seed);
    let gate = VowelSpec {
        duration_s,
        syllables: bursts,
        ..Default::default()
    };
    for (i, v) in w.samples.iter_mut().enumerate() {
        *v *= gate.gate_at(i as f64 / sample_rate as f64);
    }
    w
}

pub fn sine(freq: f64, duration_s: f64, sample_rate: u32, amplitude: f64) -> Waveform {
    let n = (duration_s * sample_rate as f64).round() as usize;
    Waveform::new(
        (0..n)
            .map(|i| amplitude * (2.0 * PI * freq * i as f64 / sample_rate as f64).sin())
            .collect(),
        sample_rate,
    )
}

/// Pads `x` with `seconds` of silence on both ends.
pub fn pad_silence(x: &Waveform, seconds: f64) -> Waveform {
    let pad = (seconds * x.sample_rate as f64).round() as usize;
    let mut samples = vec![0.0; pad];
    samples.extend_from_slice(&x.samples);
    samples.extend(std::iter::repeat_n(0.0, pad));
    Waveform::new(samples, x.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vowel_has_requested_rms_and_length() {
        let w = VowelSpec::default().duration(0.5).render();
        assert_eq!(w.len(), 8000);
        assert!((w.rms() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn vibrato_stays_within_depth() {
        let v = VowelSpec::default().vibrato(50.0);
        for i in 0..1000 {
            let f = v.f0_at(i as f64 / 500.0);
            let cents = 1200.0 * (f / 220.0).log2();
            assert!(cents.abs() <= 50.0 + 1e-9);
        }
    }
}
