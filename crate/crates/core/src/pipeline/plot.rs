//! Four-panel spectrogram figure (original, monotonic, perturbed, perturbed
//! envelope) with the metrics that back each panel's claim.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::builders::Frontend;
use super::tensor::write_atomic;
use crate::dsp::{quefrency_energy_ratio, real_cepstrum_of_magnitude, MagnitudeSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::perturb::WarpFactor;
use crate::vocoder::estimate_f0;

/// Dynamic range shown in each panel.
const RANGE_DB: f64 = 80.0;

pub const PANEL_NAMES: [&str; 4] = [
    "a_spectrogram",
    "b_monotonic",
    "c_perturbed",
    "d_envelope",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Metrics {
    pub alpha: f64,
    /// Voiced F0 spread of the input and of the monotonic re-synthesis.
    pub f0_std_cents_original: Option<f64>,
    pub f0_std_cents_monotonic: Option<f64>,
    pub mean_centroid_hz_monotonic: f64,
    pub mean_centroid_hz_perturbed: f64,
    /// Share of non-silent frames whose centroid moved down under VTLP.
    pub centroid_lowered_fraction: f64,
    /// Worst-frame share of the envelope's re-cepstrum energy at or below
    /// the lifter order.
    pub min_quefrency_ratio: f64,
    pub harmonics_flattened: bool,
    pub formants_lowered: bool,
    pub envelope_smooth: bool,
}

impl Fig2Metrics {
    pub fn passed(&self) -> bool {
        self.harmonics_flattened && self.formants_lowered && self.envelope_smooth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Report {
    pub panels: Vec<PathBuf>,
    pub metrics_path: PathBuf,
    pub metrics: Fig2Metrics,
}

/// Renders a linear magnitude spectrogram as a grayscale PNG: time runs
/// left to right, frequency upward, the top `RANGE_DB` dB mapped to 0..255.
pub fn spectrogram_image(mag: &MagnitudeSpectrogram) -> GrayImage {
    let (t, k) = mag.data.dim();
    let db = mag.data.mapv(|v| 20.0 * v.max(1e-12).log10());
    let top = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    GrayImage::from_fn(t.max(1) as u32, k.max(1) as u32, |x, y| {
        if t == 0 || k == 0 {
            return Luma([0]);
        }
        let v = db[[x as usize, k - 1 - y as usize]];
        let level = ((v - (top - RANGE_DB)) / RANGE_DB).clamp(0.0, 1.0);
        Luma([(level * 255.0).round() as u8])
    })
}

/// Frames whose energy is within 40 dB of the loudest one.
fn active_frames(mag: &MagnitudeSpectrogram) -> Vec<usize> {
    let energy: Vec<f64> = mag
        .data
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    (0..energy.len())
        .filter(|&t| peak > 0.0 && energy[t] >= peak * 1e-4)
        .collect()
}

/// Writes the four panels and `fig2_metrics.json` into `out_dir`, warping
/// with the configured fixed figure α.
pub fn plot_figure2(x: &Waveform, fe: &Frontend, out_dir: &Path) -> Result<Fig2Report> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg = &fe.config;
    let alpha = WarpFactor::new(cfg.figure_alpha)?;
    let original = fe.magnitude(x)?;
    let p = fe.perturb(x, alpha)?;
    let envelope = fe.envelope(&p.spec)?;

    let panels_data = [&original, &p.monotonic_spec, &p.spec, &envelope];
    let mut panels = Vec::new();
    for (name, mag) in PANEL_NAMES.iter().zip(panels_data) {
        let path = out_dir.join(format!("{name}.png"));
        let mut png = Vec::new();
        spectrogram_image(mag).write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)?;
        write_atomic(&path, &png)?;
        panels.push(path);
    }

    let f0_orig = p.pitch.voiced_std_cents();
    let f0_mono = estimate_f0(&p.monotonic, &cfg.vocoder)?.voiced_std_cents();

    let active = active_frames(&p.monotonic_spec);
    let cb = p.monotonic_spec.centroids_hz();
    let cc = p.spec.centroids_hz();
    let mean = |c: &[f64]| {
        if active.is_empty() {
            0.0
        } else {
            active.iter().map(|&t| c[t]).sum::<f64>() / active.len() as f64
        }
    };
    let lowered = active.iter().filter(|&&t| cc[t] < cb[t]).count();
    let centroid_lowered_fraction = if active.is_empty() {
        0.0
    } else {
        lowered as f64 / active.len() as f64
    };

    let recep = real_cepstrum_of_magnitude(&envelope)?;
    let min_quefrency_ratio = recep
        .data
        .rows()
        .into_iter()
        .map(|r| quefrency_energy_ratio(&r.to_vec(), cfg.lifter_order))
        .fold(1.0, f64::min);

    let th = &cfg.probes;
    let harmonics_flattened = match (f0_orig, f0_mono) {
        (Some(a), Some(b)) => b < th.max_f0_std_cents && b <= a,
        _ => false,
    };
    let (mb, mc) = (mean(&cb), mean(&cc));
    let formants_lowered = if alpha.alpha < 1.0 {
        mc < mb && centroid_lowered_fraction >= th.min_centroid_accuracy
    } else {
        mc >= mb
    };
    let metrics = Fig2Metrics {
        alpha: alpha.alpha,
        f0_std_cents_original: f0_orig,
        f0_std_cents_monotonic: f0_mono,
        mean_centroid_hz_monotonic: mb,
        mean_centroid_hz_perturbed: mc,
        centroid_lowered_fraction,
        min_quefrency_ratio,
        harmonics_flattened,
        formants_lowered,
        envelope_smooth: min_quefrency_ratio >= th.min_quefrency_ratio,
    };
    let metrics_path = out_dir.join("fig2_metrics.json");
    let mut json = serde_json::to_vec_pretty(&metrics)?;
    json.push(b'\n');
    write_atomic(&metrics_path, &json)?;
    Ok(Fig2Report {
        panels,
        metrics_path,
        metrics,
    })
}
