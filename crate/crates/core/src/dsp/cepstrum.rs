use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::{ComplexSpectrogram, FrameConfig, MagnitudeSpectrogram, RealFft, Scale, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::par;

const EXP_LIMIT: f64 = 700.0;

/// T x fft_size real cepstrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Cepstrum {
    pub data: Array2<f64>,
    pub config: FrameConfig,
    /// Largest |imaginary part| discarded by the inverse transform.
    pub max_imag_residue: f64,
}

impl Cepstrum {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn fft_size(&self) -> usize {
        self.data.ncols()
    }
}

/// Per-quefrency weights for low-quefrency liftering.
///
/// `weights[i] = 0.5 u[n_c - i] + 0.5 u[n_c - i - 1]` for `i <= fft_size/2`
/// with `u[0] = 1`, and `weights[fft_size - i] = weights[i]`, so the liftered
/// cepstrum stays even and its transform stays real.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifter {
    pub n_c: usize,
    pub weights: Vec<f64>,
}

fn unit_step(n: isize) -> f64 {
    if n >= 0 {
        1.0
    } else {
        0.0
    }
}

pub fn make_lifter(n_c: usize, fft_size: usize) -> Result<Lifter> {
    if fft_size < 4 || !(1 <= n_c && n_c < fft_size / 2) {
        return Err(Error::Config(format!(
            "lifter cutoff {n_c} must lie in [1, {})",
            fft_size / 2
        )));
    }
    let mut weights = vec![0.0; fft_size];
    for i in 0..=fft_size / 2 {
        let d = n_c as isize - i as isize;
        let w = 0.5 * unit_step(d) + 0.5 * unit_step(d - 1);
        weights[i] = w;
        if i > 0 {
            weights[fft_size - i] = w;
        }
    }
    Ok(Lifter { n_c, weights })
}

/// Same support as [`make_lifter`] with the half-weight at `n_c` raised to 1,
/// which makes liftering exactly idempotent.
pub fn make_lifter_binarized(n_c: usize, fft_size: usize) -> Result<Lifter> {
    let mut l = make_lifter(n_c, fft_size)?;
    for w in &mut l.weights {
        if *w > 0.0 {
            *w = 1.0;
        }
    }
    Ok(l)
}

fn cepstrum_rows(
    log_half: impl Fn(usize) -> Vec<f64> + Sync + Send,
    n_frames: usize,
    fft: &RealFft,
) -> (Vec<Vec<f64>>, f64) {
    let rows = par::map_indices(n_frames, |t| {
        let full = fft.mirror_even(&log_half(t));
        let mut buf: Vec<Complex64> = full.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.inverse_in_place(&mut buf);
        let residue = buf.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
        (buf.into_iter().map(|c| c.re).collect::<Vec<_>>(), residue)
    });
    let residue = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
    (rows.into_iter().map(|r| r.0).collect(), residue)
}

fn assemble(rows: Vec<Vec<f64>>, n: usize) -> Array2<f64> {
    let t = rows.len();
    Array2::from_shape_vec((t, n), rows.into_iter().flatten().collect())
        .expect("rows have uniform length")
}

/// Inverse DFT of the floored log-magnitude of every frame.
pub fn real_cepstrum(spec: &ComplexSpectrogram) -> Result<Cepstrum> {
    if spec.num_frames() == 0 {
        return Err(Error::InvalidInput("empty spectrogram".into()));
    }
    real_cepstrum_of_magnitude(&spec.magnitude())
}

/// [`real_cepstrum`] from magnitudes alone; phase never enters the result.
pub fn real_cepstrum_of_magnitude(mag: &MagnitudeSpectrogram) -> Result<Cepstrum> {
    let cfg = mag.config;
    if mag.num_frames() == 0 {
        return Err(Error::InvalidInput("empty spectrogram".into()));
    }
    if mag.num_bins() != cfg.n_bins() {
        return Err(Error::InvalidInput(format!(
            "spectrogram has {} bins, fft_size {} needs {}",
            mag.num_bins(),
            cfg.fft_size,
            cfg.n_bins()
        )));
    }
    let fft = RealFft::new(cfg.fft_size);
    let log_row = |t: usize| -> Vec<f64> {
        mag.data
            .row(t)
            .iter()
            .map(|&v| match mag.scale {
                Scale::Linear => v.max(LOG_FLOOR).ln(),
                Scale::Log => v,
            })
            .collect()
    };
    let (rows, residue) = cepstrum_rows(log_row, mag.num_frames(), &fft);
    Ok(Cepstrum {
        data: assemble(rows, cfg.fft_size),
        config: cfg,
        max_imag_residue: residue,
    })
}

/// Elementwise product of every cepstral frame with the lifter weights.
pub fn lifter_cepstrum(c: &Cepstrum, lifter: &Lifter) -> Result<Cepstrum> {
    if lifter.weights.len() != c.fft_size() {
        return Err(Error::InvalidInput(format!(
            "lifter length {} does not match cepstrum length {}",
            lifter.weights.len(),
            c.fft_size()
        )));
    }
    let mut data = c.data.clone();
    for mut row in data.rows_mut() {
        for (v, w) in row.iter_mut().zip(&lifter.weights) {
            *v *= w;
        }
    }
    Ok(Cepstrum {
        data,
        config: c.config,
        max_imag_residue: c.max_imag_residue,
    })
}

/// `exp(DFT(c))` per frame, keeping the `fft_size/2+1` non-negative bins.
/// The exponent is clamped to `±EXP_LIMIT` so the result stays finite and
/// strictly positive for any finite cepstrum.
pub fn envelope_from_cepstrum(c: &Cepstrum) -> Result<MagnitudeSpectrogram> {
    let n = c.fft_size();
    if n != c.config.fft_size {
        return Err(Error::InvalidInput("cepstrum length differs from fft_size".into()));
    }
    let fft = RealFft::new(n);
    let half = n / 2 + 1;
    let rows = par::map_indices(c.num_frames(), |t| {
        let row = c.data.row(t);
        let spectrum = fft.forward_real(row.as_slice().expect("standard layout"));
        spectrum[..half].iter().map(|z| z.re.clamp(-EXP_LIMIT, EXP_LIMIT).exp()).collect::<Vec<f64>>()
    });
    Ok(MagnitudeSpectrogram {
        data: assemble(rows, half),
        scale: Scale::Linear,
        config: c.config,
    })
}

/// Fraction of a cepstral frame's energy at circular quefrencies
/// `min(i, n - i) <= max_q`.
pub fn quefrency_energy_ratio(frame: &[f64], max_q: usize) -> f64 {
    let n = frame.len();
    let (mut low, mut total) = (0.0, 0.0);
    for (i, &v) in frame.iter().enumerate() {
        let e = v * v;
        total += e;
        if i.min(n - i) <= max_q {
            low += e;
        }
    }
    if total > 0.0 {
        low / total
    } else {
        1.0
    }
}
