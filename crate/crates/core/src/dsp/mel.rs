use ndarray::Array2;

use super::{FrameConfig, MagnitudeSpectrogram, Scale, LOG_FLOOR};
use crate::error::{Error, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// T x n_mels log-mel matrix (natural log, floored).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Array2<f64>,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }
}

/// Triangular filters with edges equally spaced on the mel scale, weights
/// evaluated at the FFT bin centre frequencies. Peak weight is 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// n_mels x n_bins
    pub weights: Array2<f64>,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fmin: f64, fmax: f64, cfg: &FrameConfig) -> Result<Self> {
        if n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        if fmax > cfg.nyquist() {
            return Err(Error::Config(format!(
                "fmax {fmax} Hz exceeds Nyquist {} Hz",
                cfg.nyquist()
            )));
        }
        if !(0.0 <= fmin && fmin < fmax) {
            return Err(Error::Config(format!("need 0 <= fmin < fmax, got {fmin}..{fmax}")));
        }
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = cfg.n_bins();
        let mut weights = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = cfg.bin_hz(k as f64);
                let w = if f > left && f <= centre {
                    (f - left) / (centre - left)
                } else if f > centre && f < right {
                    (right - f) / (right - centre)
                } else {
                    0.0
                };
                weights[[m, k]] = w;
            }
        }
        Ok(Self {
            weights,
            fmin,
            fmax,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    /// Filterbank applied to a linear magnitude spectrogram, then `ln(max(v, floor))`.
    pub fn project(&self, mag: &MagnitudeSpectrogram) -> Result<MelSpectrogram> {
        let data = self.project_linear(mag)?.mapv(|v| v.max(LOG_FLOOR).ln());
        Ok(MelSpectrogram {
            data,
            n_mels: self.n_mels(),
            fmin: self.fmin,
            fmax: self.fmax,
        })
    }

    /// Filterbank energies without the log: T x n_mels.
    pub fn project_linear(&self, mag: &MagnitudeSpectrogram) -> Result<Array2<f64>> {
        if mag.scale != Scale::Linear {
            return Err(Error::InvalidInput("mel projection needs linear magnitudes".into()));
        }
        if mag.num_bins() != self.weights.ncols() {
            return Err(Error::InvalidInput(format!(
                "spectrogram has {} bins, filterbank expects {}",
                mag.num_bins(),
                self.weights.ncols()
            )));
        }
        Ok(mag.data.dot(&self.weights.t()))
    }
}

pub fn mel_project(
    mag: &MagnitudeSpectrogram,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<MelSpectrogram> {
    MelFilterbank::new(n_mels, fmin, fmax, &mag.config)?.project(mag)
}
