use ndarray::Array2;
use rustfft::num_complex::Complex64;

use std::f64::consts::PI;

use super::f0::{interp_at, tracked_lags, LagAnalyzer, UPSAMPLE};
use super::{AnalysisResult, Aperiodicity, PitchContour, SpectralEnvelope, VocoderConfig};
use crate::dsp::{RealFft, Waveform, LOG_FLOOR};
use crate::error::Result;
use crate::par;

/// Band that contains `hz`, given inner edges.
pub fn band_index(hz: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| hz >= e).count()
}

struct FrameParams {
    f0: f64,
    ap: Vec<f64>,
    env: Vec<f64>,
}

/// Smoothing width used when a frame has no F0.
const UNVOICED_SMOOTHING_HZ: f64 = 300.0;

/// Moving average of a full-circle power spectrum over `width` bins
/// (fractional widths via the interpolated running sum).
fn boxcar_smooth(power: &[f64], width: f64) -> Vec<f64> {
    let n = power.len();
    let pad = (width / 2.0).ceil() as usize + 2;
    // running[i] = sum of power over extended indices < i - pad
    let mut running = Vec::with_capacity(n + 2 * pad + 1);
    running.push(0.0);
    for i in 0..n + 2 * pad {
        let k = (i as isize - pad as isize).rem_euclid(n as isize) as usize;
        running.push(running[i] + power[k]);
    }
    let at = |x: f64| -> f64 {
        let x = x + pad as f64 + 0.5;
        let i = x.floor() as usize;
        let f = x - i as f64;
        running[i] * (1.0 - f) + running[(i + 1).min(running.len() - 1)] * f
    };
    (0..n)
        .map(|k| (at(k as f64 + width / 2.0) - at(k as f64 - width / 2.0)) / width)
        .collect()
}

/// Pitch-adaptive envelope of one raw frame: the power spectrum is averaged
/// over one harmonic spacing (which nulls the harmonic ripple), then
/// cepstrally smoothed and rescaled so that the mean of `env^2` over the FFT
/// circle equals the frame's mean power.
fn frame_envelope(
    frame: &[f64],
    window: &[f64],
    window_power: f64,
    fft: &RealFft,
    order: usize,
    f0: f64,
    sample_rate: f64,
) -> Vec<f64> {
    let n = fft.len();
    let half = n / 2 + 1;
    let windowed: Vec<f64> = frame.iter().zip(window).map(|(a, b)| a * b).collect();
    let energy: f64 = windowed.iter().map(|v| v * v).sum();
    if !(energy > 1e-20) {
        return vec![LOG_FLOOR; half];
    }
    let spec = fft.forward_real(&windowed);
    let power: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let spacing = if f0 > 0.0 { f0 } else { UNVOICED_SMOOTHING_HZ };
    let smoothed = boxcar_smooth(&power, spacing * n as f64 / sample_rate);
    let floor2 = LOG_FLOOR * LOG_FLOOR;
    let mut buf: Vec<Complex64> = smoothed
        .iter()
        .map(|&p| Complex64::new(0.5 * p.max(floor2).ln(), 0.0))
        .collect();
    fft.inverse_in_place(&mut buf);
    for (i, c) in buf.iter_mut().enumerate() {
        c.im = 0.0;
        if i.min(n - i) >= order {
            c.re = 0.0;
        }
    }
    fft.forward_in_place(&mut buf);
    let smooth: Vec<f64> = buf.iter().map(|c| c.re.exp()).collect();
    let mean_sq = smooth.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let target = energy / window_power;
    let scale = (target / mean_sq).sqrt();
    smooth[..half]
        .iter()
        .map(|v| (v * scale).max(LOG_FLOOR))
        .collect()
}

/// Window-corrected periodicity of each band at lag `tau`, as aperiodicity.
/// The band autocorrelation is evaluated at the fractional lag directly from
/// the power spectrum, since high bands oscillate too fast across lags for
/// interpolation between integer lags.
fn band_aperiodicity(
    power: &[f64],
    tau: f64,
    lag: &LagAnalyzer,
    cfg: &VocoderConfig,
) -> Vec<f64> {
    let n = power.len();
    let nb = cfg.num_bands();
    let bin_hz = lag.sample_rate / n as f64;
    let total: f64 = power.iter().sum();
    let window = interp_at(&lag.window_acf_fine, tau * UPSAMPLE as f64);
    let mut energy = vec![0.0; nb];
    let mut at_tau = vec![0.0; nb];
    for (k, &p) in power.iter().enumerate() {
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let b = band_index(signed.abs() * bin_hz, &cfg.band_edges);
        energy[b] += p;
        at_tau[b] += p * (2.0 * PI * signed * tau / n as f64).cos();
    }
    (0..nb)
        .map(|b| {
            if !(energy[b] > 1e-9 * total) || !(window > 1e-9) {
                return 1.0;
            }
            (1.0 - at_tau[b] / energy[b] / window).clamp(0.0, 1.0)
        })
        .collect()
}

/// F0, band aperiodicity and spectral envelope for every frame.
pub fn analyze_with(x: &Waveform, cfg: &VocoderConfig) -> Result<AnalysisResult> {
    cfg.validate()?;
    let fc = cfg.frame;
    let n_frames = fc.num_frames(x.len()).max(1);
    let lag = LagAnalyzer::new(cfg);
    let env_fft = RealFft::new(fc.fft_size);
    let env_window = fc.window.coefficients(fc.frame_length);
    let window_power: f64 = env_window.iter().map(|w| w * w).sum();
    let sr = fc.sample_rate as f64;
    let nb = cfg.num_bands();

    let lags = tracked_lags(x, cfg, &lag);
    let params = par::map_indices(n_frames, |t| {
        let start = (t * fc.hop_length) as isize - (fc.frame_length / 2) as isize;
        let raw: Vec<f64> = (0..fc.frame_length)
            .map(|j| {
                let i = start + j as isize;
                if i >= 0 && (i as usize) < x.len() {
                    x.samples[i as usize]
                } else {
                    0.0
                }
            })
            .collect();
        let (f0, ap) = match lags[t] {
            Some(tau) => {
                let a = lag.acf(&lag.frame(&x.samples, t));
                (sr / tau, band_aperiodicity(&a.power, tau, &lag, cfg))
            }
            None => (0.0, vec![1.0; nb]),
        };
        let env = frame_envelope(
            &raw,
            &env_window,
            window_power,
            &env_fft,
            cfg.envelope_order,
            f0,
            sr,
        );
        FrameParams { f0, ap, env }
    });

    let f0: Vec<f64> = params.iter().map(|p| p.f0).collect();
    let voiced = f0.iter().map(|&f| f > 0.0).collect();
    let pitch = PitchContour::new(f0, voiced, fc.hop_length, fc.sample_rate)?;
    let ap = Array2::from_shape_fn((n_frames, nb), |(t, b)| params[t].ap[b]);
    let env = Array2::from_shape_fn((n_frames, fc.n_bins()), |(t, k)| params[t].env[k]);
    Ok(AnalysisResult {
        pitch,
        aperiodicity: Aperiodicity {
            ap,
            band_edges: cfg.band_edges.clone(),
        },
        envelope: SpectralEnvelope { env },
        config_hash: cfg.hash(),
    })
}
