use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::analysis::band_index;
use super::{Aperiodicity, PitchContour, SpectralEnvelope, VocoderConfig};
use crate::dsp::{RealFft, Waveform, Window, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::par;

/// Minimum-phase spectrum (full circle) with the given half-spectrum
/// magnitude, via cepstral folding.
fn minimum_phase(half: &[f64], fft: &RealFft) -> Vec<Complex64> {
    let n = fft.len();
    let full = fft.mirror_even(half);
    let mut buf: Vec<Complex64> = full
        .iter()
        .map(|&m| Complex64::new(m.max(LOG_FLOOR).ln(), 0.0))
        .collect();
    fft.inverse_in_place(&mut buf);
    for (i, c) in buf.iter_mut().enumerate() {
        let fold = if i == 0 || i == n / 2 {
            1.0
        } else if i < n / 2 {
            2.0
        } else {
            0.0
        };
        *c = Complex64::new(c.re * fold, 0.0);
    }
    fft.forward_in_place(&mut buf);
    buf.iter().map(|c| c.exp()).collect()
}

/// Ratio of the mean of `half^2` over the full circle to its mean over the
/// harmonics of `f0`. A pulse train only samples the envelope at its
/// harmonics, so this is the gain that makes its power match the envelope's.
fn harmonic_power_correction(half: &[f64], f0: f64, bin_hz: f64) -> f64 {
    let last = half.len() - 1;
    let n = 2 * last;
    let sq = |k: usize| half[k] * half[k];
    let continuous = (sq(0) + sq(last) + 2.0 * (1..last).map(sq).sum::<f64>()) / n as f64;
    let at = |hz: f64| {
        let x = hz / bin_hz;
        let k = (x.floor() as usize).min(last - 1);
        let f = x - k as f64;
        let v = half[k] * (1.0 - f) + half[k + 1] * f;
        v * v
    };
    let nyquist = last as f64 * bin_hz;
    let harmonics: f64 = (1..)
        .map(|h| h as f64 * f0)
        .take_while(|&hz| hz < nyquist)
        .map(at)
        .sum();
    let sampled = (sq(0) + 2.0 * harmonics) * f0 / (n as f64 * bin_hz);
    if sampled > 0.0 && continuous > 0.0 {
        (continuous / sampled).sqrt()
    } else {
        1.0
    }
}

/// Half spectrum on twice the frequency resolution, interpolated in the log
/// domain.
fn upsample_half(half: &[f64]) -> Vec<f64> {
    let last = half.len() - 1;
    let log: Vec<f64> = half.iter().map(|v| v.max(LOG_FLOOR).ln()).collect();
    (0..=2 * last)
        .map(|j| {
            let k = j / 2;
            if j % 2 == 0 {
                half[k].max(LOG_FLOOR)
            } else {
                (0.5 * (log[k] + log[k + 1])).exp()
            }
        })
        .collect()
}

struct Pulse {
    position: f64,
    frame: usize,
    period: f64,
}

/// Pulse instants by phase accumulation, with F0 linearly interpolated
/// between frame centres at sample resolution.
fn pulse_train(pitch: &PitchContour, hop: usize, len: usize) -> Vec<Pulse> {
    let t_max = pitch.len() - 1;
    let sr = pitch.sample_rate as f64;
    let mut pulses = Vec::new();
    let mut phase = 0.0f64;
    let mut was_voiced = false;
    for n in 0..len {
        let u = n as f64 / hop as f64;
        let nearest = (u.round() as usize).min(t_max);
        if !pitch.voiced[nearest] {
            was_voiced = false;
            continue;
        }
        let t0 = (u.floor() as usize).min(t_max);
        let t1 = (t0 + 1).min(t_max);
        let f = match (pitch.voiced[t0], pitch.voiced[t1]) {
            (true, true) => {
                let frac = (u - t0 as f64).min(1.0);
                pitch.f0[t0] * (1.0 - frac) + pitch.f0[t1] * frac
            }
            (true, false) => pitch.f0[t0],
            _ => pitch.f0[t1],
        };
        if !was_voiced {
            pulses.push(Pulse {
                position: n as f64,
                frame: nearest,
                period: sr / f,
            });
            phase = 0.0;
            was_voiced = true;
            continue;
        }
        let step = f / sr;
        let next = phase + step;
        if next >= 1.0 {
            let position = (n - 1) as f64 + (1.0 - phase) / step;
            pulses.push(Pulse {
                position,
                frame: ((position / hop as f64).round() as usize).min(t_max),
                period: sr / f,
            });
        }
        phase = next.fract();
    }
    pulses
}

/// Pulse-plus-noise synthesis. Output has `T * hop` samples.
pub fn synthesize(
    pitch: &PitchContour,
    aperiodicity: &Aperiodicity,
    envelope: &SpectralEnvelope,
    cfg: &VocoderConfig,
) -> Result<Waveform> {
    cfg.validate()?;
    let fc = cfg.frame;
    let t_frames = pitch.len();
    let n = fc.fft_size;
    let half = fc.n_bins();
    if t_frames == 0 {
        return Err(Error::InvalidInput("empty pitch contour".into()));
    }
    if aperiodicity.ap.nrows() != t_frames || envelope.env.nrows() != t_frames {
        return Err(Error::InvalidInput(format!(
            "frame counts differ: pitch {}, aperiodicity {}, envelope {}",
            t_frames,
            aperiodicity.ap.nrows(),
            envelope.env.nrows()
        )));
    }
    if envelope.env.ncols() != half {
        return Err(Error::InvalidInput(format!(
            "envelope has {} bins, expected {half}",
            envelope.env.ncols()
        )));
    }
    if aperiodicity.ap.ncols() != aperiodicity.band_edges.len() + 1 {
        return Err(Error::InvalidInput("aperiodicity band count mismatch".into()));
    }
    if pitch.hop != fc.hop_length {
        return Err(Error::InvalidInput(format!(
            "contour hop {} differs from config hop {}",
            pitch.hop, fc.hop_length
        )));
    }

    let hop = fc.hop_length;
    let out_len = t_frames * hop;
    // Responses are rendered on a circle twice the analysis length so that
    // deep spectral valleys are not filled by time aliasing.
    let m = 2 * n;
    let fft = RealFft::new(m);
    let band_of: Vec<usize> = (0..half)
        .map(|k| band_index(fc.bin_hz(k as f64), &aperiodicity.band_edges))
        .collect();
    let gains = |t: usize, periodic: bool| -> Vec<f64> {
        (0..half)
            .map(|k| {
                let a = aperiodicity.ap[[t, band_of[k]]].clamp(0.0, 1.0);
                let share = if periodic { 1.0 - a } else { a };
                envelope.env[[t, k]].max(0.0) * share.sqrt()
            })
            .collect()
    };

    // Periodic part: one minimum-phase response per voiced frame.
    let responses: Vec<Option<(Vec<Complex64>, f64)>> = par::map_indices(t_frames, |t| {
        pitch.voiced[t].then(|| {
            let g = gains(t, true);
            let correction = harmonic_power_correction(&g, pitch.f0[t], fc.bin_hz(1.0));
            (minimum_phase(&upsample_half(&g), &fft), correction)
        })
    });
    let pulses = pulse_train(pitch, hop, out_len);
    let lead = n / 2;
    let pulse_waves = par::map_slice(&pulses, |p| {
        let Some((resp, correction)) = &responses[p.frame] else {
            return (0usize, Vec::new());
        };
        // The fractional delay rings on both sides of the pulse; a leading
        // margin keeps that ringing in front of it instead of wrapping.
        let base = p.position.floor();
        let frac = p.position - base + lead as f64;
        let amp = p.period.sqrt() * correction;
        let mut buf: Vec<Complex64> = resp
            .iter()
            .enumerate()
            .map(|(k, &h)| {
                let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
                let shift = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * kk * frac / m as f64);
                h * shift * amp
            })
            .collect();
        fft.inverse_in_place(&mut buf);
        (base as usize, buf.into_iter().map(|c| c.re).collect())
    });

    // Aperiodic part: windowed Gaussian noise shaped per frame.
    let window = Window::Hann.coefficients(n);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let noise_scale = (hop as f64 / window_power).sqrt();
    let noise_frames = par::map_indices(t_frames, |t| {
        let g = fft.mirror_even(&upsample_half(&gains(t, false)));
        if g.iter().all(|&v| v <= LOG_FLOOR) {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
        rng.set_stream(t as u64);
        // The windowed frame sits in the middle of the longer circle, leaving
        // room for the filter response on both sides.
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (b, w) in buf[n / 2..n / 2 + n].iter_mut().zip(&window) {
            let e: f64 = StandardNormal.sample(&mut rng);
            b.re = e * w;
        }
        fft.forward_in_place(&mut buf);
        for (c, gain) in buf.iter_mut().zip(&g) {
            *c *= gain * noise_scale;
        }
        fft.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    });

    let pad = m;
    let mut out = vec![0.0; out_len + 2 * pad];
    for (start, wave) in &pulse_waves {
        for (j, v) in wave.iter().enumerate() {
            out[pad + start + j - lead] += v;
        }
    }
    for (t, wave) in noise_frames.iter().enumerate() {
        let start = pad + t * hop - n;
        for (j, v) in wave.iter().enumerate() {
            out[start + j] += v;
        }
    }
    Ok(Waveform::new(
        out[pad..pad + out_len].to_vec(),
        fc.sample_rate,
    ))
}
