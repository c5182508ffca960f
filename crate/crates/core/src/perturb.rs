//! Vocal tract length perturbation as a piecewise-linear warp of each
//! frame's frequency axis.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::MagnitudeSpectrogram;
use crate::dsp::Scale;
use crate::error::{Error, Result};

pub const ALPHA_MIN: f64 = 0.9;
pub const ALPHA_MAX: f64 = 1.1;

/// Frequency warping factor in [0.9, 1.1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpFactor {
    pub alpha: f64,
    /// Seed of the stream the factor was drawn from, if it was drawn.
    pub seed: Option<u64>,
}

impl WarpFactor {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&alpha) {
            return Err(Error::InvalidInput(format!(
                "warp factor {alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]"
            )));
        }
        Ok(Self { alpha, seed: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpScheme {
    PiecewiseLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpConfig {
    /// Knee of the warp before scaling by `min(alpha, 1)`.
    pub boundary_freq: f64,
    pub scheme: WarpScheme,
    /// Rescale every warped frame to its input energy.
    pub preserve_energy: bool,
}

impl Default for WarpConfig {
    fn default() -> Self {
        Self {
            boundary_freq: 4800.0,
            scheme: WarpScheme::PiecewiseLinear,
            preserve_energy: true,
        }
    }
}

/// Draws alpha uniformly from [0.9, 1.1].
pub fn sample_alpha<R: Rng + ?Sized>(rng: &mut R, seed: Option<u64>) -> WarpFactor {
    WarpFactor {
        alpha: rng.random_range(ALPHA_MIN..=ALPHA_MAX),
        seed,
    }
}

/// The warp `f -> alpha f` below the knee `min(alpha, 1) * boundary`, then a
/// straight line that pins Nyquist to itself.
#[derive(Debug, Clone, Copy)]
pub struct WarpMap {
    alpha: f64,
    knee: f64,
    nyquist: f64,
}

impl WarpMap {
    pub fn new(alpha: f64, boundary: f64, nyquist: f64) -> Result<Self> {
        let knee = boundary * alpha.min(1.0);
        if !(0.0 < boundary && boundary < nyquist) || alpha * knee >= nyquist {
            return Err(Error::Config(format!(
                "warp boundary {boundary} Hz invalid for Nyquist {nyquist} Hz and alpha {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            knee,
            nyquist,
        })
    }

    pub fn forward(&self, f: f64) -> f64 {
        if f <= self.knee {
            self.alpha * f
        } else {
            let upper = self.alpha * self.knee;
            upper + (self.nyquist - upper) * (f - self.knee) / (self.nyquist - self.knee)
        }
    }

    pub fn inverse(&self, g: f64) -> f64 {
        let upper = self.alpha * self.knee;
        if g <= upper {
            g / self.alpha
        } else {
            self.knee + (g - upper) * (self.nyquist - self.knee) / (self.nyquist - upper)
        }
    }
}

/// Warps every frame: output bin `j` takes the input value at
/// `warp^-1(freq(j))`, linearly interpolated between bins.
pub fn vtlp_warp(
    spec: &MagnitudeSpectrogram,
    w: &WarpFactor,
    cfg: &WarpConfig,
) -> Result<MagnitudeSpectrogram> {
    if !(ALPHA_MIN..=ALPHA_MAX).contains(&w.alpha) {
        return Err(Error::InvalidInput(format!(
            "warp factor {} outside [{ALPHA_MIN}, {ALPHA_MAX}]",
            w.alpha
        )));
    }
    if spec.scale != Scale::Linear {
        return Err(Error::InvalidInput("VTLP needs a linear magnitude spectrogram".into()));
    }
    let fc = spec.config;
    let map = WarpMap::new(w.alpha, cfg.boundary_freq, fc.nyquist())?;
    let n_bins = spec.num_bins();
    let last = (n_bins - 1) as f64;
    let taps: Vec<(usize, f64)> = (0..n_bins)
        .map(|j| {
            let src = fc.hz_to_bin(map.inverse(fc.bin_hz(j as f64))).clamp(0.0, last);
            let lo = (src.floor() as usize).min(n_bins - 1);
            (lo, src - lo as f64)
        })
        .collect();

    let mut out = Array2::zeros(spec.data.dim());
    for (row_in, mut row_out) in spec.data.rows().into_iter().zip(out.rows_mut()) {
        for (o, &(lo, frac)) in row_out.iter_mut().zip(&taps) {
            *o = if frac == 0.0 || lo + 1 >= n_bins {
                row_in[lo]
            } else {
                row_in[lo] * (1.0 - frac) + row_in[lo + 1] * frac
            };
        }
        if cfg.preserve_energy {
            let e_in: f64 = row_in.iter().map(|v| v * v).sum();
            let e_out: f64 = row_out.iter().map(|v| v * v).sum();
            if e_out > 0.0 {
                let g = (e_in / e_out).sqrt();
                row_out.mapv_inplace(|v| v * g);
            }
        }
    }
    MagnitudeSpectrogram::new(out, Scale::Linear, fc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FrameConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_from(rows: Vec<Vec<f64>>) -> MagnitudeSpectrogram {
        let cfg = FrameConfig::default();
        let t = rows.len();
        let data = Array2::from_shape_vec((t, cfg.n_bins()), rows.concat()).unwrap();
        MagnitudeSpectrogram::new(data, Scale::Linear, cfg).unwrap()
    }

    #[test]
    fn alpha_draws_are_deterministic_and_bounded() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(sample_alpha(&mut a, None), sample_alpha(&mut b, None));
        let mut c = ChaCha8Rng::seed_from_u64(10);
        assert_ne!(sample_alpha(&mut c, None).alpha, sample_alpha(&mut b, None).alpha);
    }

    #[test]
    fn out_of_range_alpha_rejected() {
        assert!(WarpFactor::new(1.2).is_err());
        let s = spec_from(vec![vec![1.0; 513]]);
        let w = WarpFactor {
            alpha: 0.8,
            seed: None,
        };
        assert!(matches!(
            vtlp_warp(&s, &w, &WarpConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn unit_alpha_is_identity() {
        let row: Vec<f64> = (0..513).map(|k| 1.0 + (k as f64 * 0.1).sin().abs()).collect();
        let s = spec_from(vec![row]);
        let out = vtlp_warp(&s, &WarpFactor::new(1.0).unwrap(), &WarpConfig::default()).unwrap();
        for (a, b) in s.data.iter().zip(out.data.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn warp_map_is_monotone_and_pins_ends() {
        for alpha in [0.9, 0.95, 1.0, 1.05, 1.1] {
            let m = WarpMap::new(alpha, 4800.0, 8000.0).unwrap();
            assert_eq!(m.forward(0.0), 0.0);
            assert!((m.forward(8000.0) - 8000.0).abs() < 1e-9);
            let mut prev = -1.0;
            for i in 0..=800 {
                let f = i as f64 * 10.0;
                let g = m.forward(f);
                assert!(g > prev);
                assert!((m.inverse(g) - f).abs() < 1e-9);
                prev = g;
            }
        }
    }

    #[test]
    fn tone_moves_to_scaled_bin() {
        let k = 100usize;
        let mut row = vec![0.0; 513];
        row[k] = 1.0;
        let cfg = WarpConfig {
            preserve_energy: false,
            ..Default::default()
        };
        let out = vtlp_warp(&spec_from(vec![row]), &WarpFactor::new(0.9).unwrap(), &cfg).unwrap();
        // Oracle: output bin j reads input position j / 0.9 (below the knee),
        // so the weight at j is the triangle 1 - |j / 0.9 - k|.
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..513 {
            let expected = (1.0 - (j as f64 / 0.9 - k as f64).abs()).max(0.0);
            assert!((out.data[[0, j]] - expected).abs() < 1e-12, "bin {j}");
            num += j as f64 * expected;
            den += expected;
        }
        assert!((num / den - 0.9 * k as f64).abs() < 0.5);
    }
}
