use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::{FrameConfig, MagnitudeSpectrogram, RealFft, Scale, Waveform};
use crate::error::{Error, Result};
use crate::par;

/// T x (fft_size/2+1) complex STFT. `num_samples` is the length of the
/// analysed signal, so the inverse can trim back to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Array2<Complex64>,
    pub config: FrameConfig,
    pub num_samples: usize,
}

impl ComplexSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            data: self.data.mapv(|c| c.norm()),
            scale: Scale::Linear,
            config: self.config,
        }
    }

    /// Replaces magnitudes while keeping this spectrogram's phase.
    pub fn with_magnitude(&self, mag: &MagnitudeSpectrogram) -> Result<Self> {
        if mag.data.dim() != self.data.dim() {
            return Err(Error::InvalidInput(format!(
                "magnitude shape {:?} does not match spectrogram {:?}",
                mag.data.dim(),
                self.data.dim()
            )));
        }
        let mut data = self.data.clone();
        ndarray::Zip::from(&mut data)
            .and(&mag.data)
            .for_each(|c, &m| {
                let n = c.norm();
                *c = if n > 0.0 {
                    *c * (m / n)
                } else {
                    Complex64::new(m, 0.0)
                };
            });
        Ok(Self {
            data,
            config: self.config,
            num_samples: self.num_samples,
        })
    }
}

/// Index into a signal of length `len` with whole-sample symmetric
/// reflection at both ends (`x[-1] = x[1]`).
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// First sample (possibly negative) of frame `t`; frames are centred on
/// `t * hop`.
pub(crate) fn frame_start(t: usize, cfg: &FrameConfig) -> isize {
    (t * cfg.hop_length) as isize - (cfg.frame_length / 2) as isize
}

/// Short-time Fourier transform with reflection padding. Produces
/// `ceil(len / hop)` frames.
pub fn stft(x: &Waveform, cfg: &FrameConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let n_frames = cfg.num_frames(x.len());
    let n_bins = cfg.n_bins();
    let window = cfg.window.coefficients(cfg.frame_length);
    let fft = RealFft::new(cfg.fft_size);
    let len = x.len();

    let rows = par::map_indices(n_frames, |t| {
        let start = frame_start(t, cfg);
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
        for (j, w) in window.iter().enumerate() {
            buf[j].re = x.samples[reflect_index(start + j as isize, len)] * w;
        }
        fft.forward_in_place(&mut buf);
        buf.truncate(n_bins);
        buf
    });

    let flat: Vec<Complex64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((n_frames, n_bins), flat)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(ComplexSpectrogram {
        data,
        config: *cfg,
        num_samples: len,
    })
}

/// Checks that the squared analysis window overlaps with no gaps at this hop,
/// which weighted overlap-add needs to invert the transform.
fn check_overlap_add(cfg: &FrameConfig, window: &[f64]) -> Result<()> {
    let peak = window.iter().fold(0.0f64, |m, w| m.max(w * w));
    let mut min_sum = f64::INFINITY;
    for n in 0..cfg.hop_length {
        let s: f64 = window.iter().skip(n).step_by(cfg.hop_length).map(|w| w * w).sum();
        min_sum = min_sum.min(s);
    }
    if !(min_sum > 1e-6 * peak) {
        return Err(Error::Config(format!(
            "{} window of length {} with hop {} does not satisfy the overlap-add condition",
            cfg.window.name(),
            cfg.frame_length,
            cfg.hop_length
        )));
    }
    Ok(())
}

/// Weighted overlap-add inverse of [`stft`].
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let cfg = &spec.config;
    cfg.validate()?;
    if spec.data.ncols() != cfg.n_bins() {
        return Err(Error::InvalidInput(format!(
            "spectrogram has {} bins, config expects {}",
            spec.data.ncols(),
            cfg.n_bins()
        )));
    }
    let window = cfg.window.coefficients(cfg.frame_length);
    check_overlap_add(cfg, &window)?;

    let fft = RealFft::new(cfg.fft_size);
    let n_frames = spec.num_frames();
    let frames = par::map_indices(n_frames, |t| {
        let row = spec.data.row(t);
        let n = cfg.fft_size;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| if k <= n / 2 { row[k] } else { row[n - k].conj() })
            .collect();
        fft.inverse_in_place(&mut buf);
        buf.into_iter()
            .take(cfg.frame_length)
            .zip(&window)
            .map(|(c, w)| c.re * w)
            .collect::<Vec<f64>>()
    });

    let offset = cfg.frame_length / 2;
    let padded_len = (n_frames.saturating_sub(1)) * cfg.hop_length + cfg.frame_length;
    let mut acc = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];
    for (t, frame) in frames.iter().enumerate() {
        let base = t * cfg.hop_length;
        for (j, (&v, &w)) in frame.iter().zip(&window).enumerate() {
            acc[base + j] += v;
            norm[base + j] += w * w;
        }
    }
    let out_len = if spec.num_samples > 0 {
        spec.num_samples
    } else {
        n_frames * cfg.hop_length
    };
    let samples = (0..out_len)
        .map(|i| {
            let p = i + offset;
            if p < padded_len && norm[p] > 1e-12 {
                acc[p] / norm[p]
            } else {
                0.0
            }
        })
        .collect();
    Ok(Waveform::new(samples, cfg.sample_rate))
}
