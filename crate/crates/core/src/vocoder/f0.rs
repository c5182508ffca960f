use rustfft::num_complex::Complex64;

use super::{PitchContour, VocoderConfig};
use crate::dsp::{RealFft, Waveform};
use crate::dsp::Window;
use crate::error::Result;
use crate::par;

/// Lag resolution of the F0 search, in fractions of a sample.
pub(crate) const UPSAMPLE: usize = 4;

/// Power floor, relative to the frame's peak bin, below which the whitening
/// envelope stops following the spectrum.
const WHITEN_FLOOR: f64 = 1e-5;

/// Lag-domain workspace for one framing setup: a Hann analysis window, a
/// zero-padded FFT of twice the frame length (so autocorrelations are not
/// circular) and the window's own normalized autocorrelation, which divides
/// out the taper's bias. The F0 search works on an autocorrelation
/// band-limited-interpolated to `1/UPSAMPLE` sample lags.
///
/// Before the F0 search the power spectrum is divided by a smooth envelope
/// whose quefrencies stay below half the shortest period, so formant
/// resonances do not leak into the lag domain and favour sub-octaves.
pub(crate) struct LagAnalyzer {
    pub frame_length: usize,
    pub hop: usize,
    pub sample_rate: f64,
    pub window: Vec<f64>,
    pub fft: RealFft,
    pub fine_fft: RealFft,
    pub window_acf_fine: Vec<f64>,
    pub whiten_order: usize,
}

/// Autocorrelation of one frame.
pub(crate) struct FrameAcf {
    /// Power spectrum of the windowed, mean-removed frame (full circle).
    pub power: Vec<f64>,
    /// Window-corrected normalized autocorrelation at `1/UPSAMPLE` lags.
    pub acf_fine: Vec<f64>,
    pub energy: f64,
}

/// Zero-pads a full-circle spectrum to `m` bins, keeping both halves.
fn zero_pad_spectrum(power: &[f64], m: usize) -> Vec<Complex64> {
    let n = power.len();
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n / 2 {
        out[k] = Complex64::new(power[k], 0.0);
        if k > 0 {
            out[m - k] = Complex64::new(power[n - k], 0.0);
        }
    }
    // Split the Nyquist bin between both sides to stay symmetric.
    out[n / 2] = Complex64::new(0.5 * power[n / 2], 0.0);
    out[m - n / 2] = Complex64::new(0.5 * power[n / 2], 0.0);
    out
}

impl LagAnalyzer {
    pub fn new(cfg: &VocoderConfig) -> Self {
        let frame_length = cfg.frame.frame_length;
        let window = Window::Hann.coefficients(frame_length);
        let fft = RealFft::new(2 * frame_length.next_power_of_two());
        let fine_fft = RealFft::new(UPSAMPLE * fft.len());
        let power: Vec<f64> = fft.forward_real(&window).iter().map(|c| c.norm_sqr()).collect();
        let normalize = |r: Vec<f64>| {
            let r0 = r[0];
            r.into_iter().map(|v| v / r0).collect::<Vec<f64>>()
        };
        let mut this = Self {
            frame_length,
            hop: cfg.frame.hop_length,
            sample_rate: cfg.frame.sample_rate as f64,
            window,
            fft,
            fine_fft,
            window_acf_fine: Vec::new(),
            whiten_order: ((0.5 * cfg.frame.sample_rate as f64 / cfg.f0_max) as usize).max(1),
        };
        this.window_acf_fine = normalize(this.autocorrelation_fine(&power));
        this
    }

    /// Mean-removed samples of frame `t`, centred on `t * hop`, zero outside
    /// the signal.
    pub fn frame(&self, x: &[f64], t: usize) -> Vec<f64> {
        let start = (t * self.hop) as isize - (self.frame_length / 2) as isize;
        let mut buf: Vec<f64> = (0..self.frame_length)
            .map(|j| {
                let i = start + j as isize;
                if i >= 0 && (i as usize) < x.len() {
                    x[i as usize]
                } else {
                    0.0
                }
            })
            .collect();
        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
        for v in &mut buf {
            *v -= mean;
        }
        buf
    }

    pub fn acf(&self, frame: &[f64]) -> FrameAcf {
        let windowed: Vec<f64> = frame.iter().zip(&self.window).map(|(a, b)| a * b).collect();
        let spec = self.fft.forward_real(&windowed);
        let power: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
        let acf_fine = self.correct_with(
            &self.autocorrelation_fine(&self.whiten(&power)),
            &self.window_acf_fine,
            UPSAMPLE,
        );
        let energy = windowed.iter().map(|v| v * v).sum();
        FrameAcf {
            power,
            acf_fine,
            energy,
        }
    }

    /// `power` divided by its low-quefrency envelope.
    fn whiten(&self, power: &[f64]) -> Vec<f64> {
        let n = power.len();
        let peak = power.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return power.to_vec();
        }
        let floor = peak * WHITEN_FLOOR;
        let mut buf: Vec<Complex64> = power
            .iter()
            .map(|&p| Complex64::new(p.max(floor).ln(), 0.0))
            .collect();
        self.fft.inverse_in_place(&mut buf);
        for (q, c) in buf.iter_mut().enumerate() {
            c.im = 0.0;
            if q.min(n - q) >= self.whiten_order {
                c.re = 0.0;
            }
        }
        self.fft.forward_in_place(&mut buf);
        power
            .iter()
            .zip(&buf)
            .map(|(&p, e)| p / e.re.exp().max(floor))
            .collect()
    }

    fn autocorrelation_fine(&self, power: &[f64]) -> Vec<f64> {
        let mut buf = zero_pad_spectrum(power, self.fine_fft.len());
        self.fine_fft.inverse_in_place(&mut buf);
        buf.iter().map(|c| c.re * UPSAMPLE as f64).collect()
    }

    /// Normalizes by lag 0 and divides out the window autocorrelation.
    fn correct_with(&self, raw: &[f64], window_acf: &[f64], step: usize) -> Vec<f64> {
        let r0 = raw[0];
        if !(r0 > 0.0) {
            return vec![0.0; raw.len()];
        }
        let limit = step * self.frame_length / 2;
        raw.iter()
            .zip(window_acf)
            .enumerate()
            .map(|(tau, (&r, &w))| {
                if tau < limit && w > 1e-9 {
                    r / r0 / w
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Linear interpolation of `r` at fractional lag `tau`.
pub(crate) fn interp_at(r: &[f64], tau: f64) -> f64 {
    let i = tau.floor() as usize;
    let frac = tau - i as f64;
    if i + 1 >= r.len() {
        return r[r.len() - 1];
    }
    r[i] * (1.0 - frac) + r[i + 1] * frac
}

/// Periodicity peak in one frame.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    /// Lag in samples.
    pub lag: f64,
    /// Interpolated peak height plus the per-octave bonus for shorter lags.
    pub score: f64,
}

const MAX_CANDIDATES: usize = 8;

/// Local autocorrelation peaks inside the search range that reach the
/// voicing threshold, best score first. `acf` is sampled every
/// `1/UPSAMPLE` samples; peaks are refined parabolically.
pub(crate) fn candidates(acf: &[f64], cfg: &VocoderConfig) -> Vec<Candidate> {
    let sr = cfg.frame.sample_rate as f64;
    let up = UPSAMPLE as f64;
    let min_lag = ((up * sr / cfg.f0_max).floor() as usize).max(2);
    let max_lag = (up * sr / cfg.f0_min).ceil() as usize;
    let mut out = Vec::new();
    for tau in min_lag..=max_lag.min(acf.len() - 2) {
        let (a, b, c) = (acf[tau - 1], acf[tau], acf[tau + 1]);
        if !(b > a && b >= c) {
            continue;
        }
        let denom = a - 2.0 * b + c;
        let delta = if denom < 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let lag = (tau as f64 + delta) / up;
        // The window correction can push strong peaks slightly past 1; cap
        // so exact multiples of the period tie and the octave cost decides.
        let strength = (b - 0.25 * (a - c) * delta).min(1.0);
        if strength < cfg.voicing_threshold || !(cfg.f0_min..=cfg.f0_max).contains(&(sr / lag)) {
            continue;
        }
        let score = strength - cfg.octave_cost * (cfg.f0_min * lag / sr).log2();
        out.push(Candidate { lag, score });
    }
    out.sort_by(|x, y| y.score.total_cmp(&x.score));
    out.truncate(MAX_CANDIDATES);
    out
}

/// Minimum-cost path through the per-frame candidates plus an unvoiced
/// option worth `voicing_threshold`. Voiced-to-voiced moves cost
/// `octave_jump_cost` per octave; voicing changes cost
/// `voiced_unvoiced_cost`. Returns the chosen lag per frame.
pub(crate) fn track(frames: &[Vec<Candidate>], cfg: &VocoderConfig) -> Vec<Option<f64>> {
    if frames.is_empty() {
        return Vec::new();
    }
    // Option index 0 is unvoiced, i >= 1 is frames[t][i - 1].
    let local = |t: usize, i: usize| -> f64 {
        if i == 0 {
            -cfg.voicing_threshold
        } else {
            -frames[t][i - 1].score
        }
    };
    let transition = |t: usize, i: usize, j: usize| -> f64 {
        match (i, j) {
            (0, 0) => 0.0,
            (0, _) | (_, 0) => cfg.voiced_unvoiced_cost,
            _ => {
                let a = frames[t - 1][i - 1].lag;
                let b = frames[t][j - 1].lag;
                cfg.octave_jump_cost * (a / b).log2().abs()
            }
        }
    };
    let mut cost: Vec<f64> = (0..=frames[0].len()).map(|i| local(0, i)).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; cost.len()]];
    for t in 1..frames.len() {
        let n = frames[t].len() + 1;
        let mut next = vec![f64::INFINITY; n];
        let mut from = vec![0usize; n];
        for (j, slot) in next.iter_mut().enumerate() {
            for (i, &c) in cost.iter().enumerate() {
                let v = c + transition(t, i, j);
                if v < *slot {
                    *slot = v;
                    from[j] = i;
                }
            }
            *slot += local(t, j);
        }
        cost = next;
        back.push(from);
    }
    let mut i = (0..cost.len())
        .min_by(|&a, &b| cost[a].total_cmp(&cost[b]))
        .unwrap_or(0);
    let mut path = vec![None; frames.len()];
    for t in (0..frames.len()).rev() {
        path[t] = (i > 0).then(|| frames[t][i - 1].lag);
        i = back[t][i];
    }
    path
}

/// Tracked lag (in samples) of every frame, `None` where unvoiced.
pub(crate) fn tracked_lags(x: &Waveform, cfg: &VocoderConfig, lag: &LagAnalyzer) -> Vec<Option<f64>> {
    let n_frames = cfg.frame.num_frames(x.len()).max(1);
    let peak = x.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cands = par::map_indices(n_frames, |t| {
        let frame = lag.frame(&x.samples, t);
        let local = frame.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if local <= cfg.silence_threshold * peak {
            return Vec::new();
        }
        let a = lag.acf(&frame);
        if a.energy > 1e-20 {
            candidates(&a.acf_fine, cfg)
        } else {
            Vec::new()
        }
    });
    let mut path = track(&cands, cfg);
    drop_short_runs(&mut path, cfg.min_voiced_frames);
    path
}

/// Unvoices voiced runs shorter than `min_len` frames.
pub(crate) fn drop_short_runs(path: &mut [Option<f64>], min_len: usize) {
    let mut t = 0;
    while t < path.len() {
        if path[t].is_none() {
            t += 1;
            continue;
        }
        let start = t;
        while t < path.len() && path[t].is_some() {
            t += 1;
        }
        if t - start < min_len {
            path[start..t].fill(None);
        }
    }
}

/// Per-frame F0 from window-corrected normalized autocorrelation. Frames
/// whose peaks reach `voicing_threshold` offer candidates; a dynamic
/// programming pass picks one per frame (or unvoiced), penalizing octave
/// jumps and voicing flips.
pub fn estimate_f0(x: &Waveform, cfg: &VocoderConfig) -> Result<PitchContour> {
    cfg.validate()?;
    let lag = LagAnalyzer::new(cfg);
    let sr = cfg.frame.sample_rate as f64;
    let f0: Vec<f64> = tracked_lags(x, cfg, &lag)
        .into_iter()
        .map(|l| l.map_or(0.0, |tau| sr / tau))
        .collect();
    let voiced = f0.iter().map(|&f| f > 0.0).collect();
    PitchContour::new(f0, voiced, cfg.frame.hop_length, cfg.frame.sample_rate)
}
