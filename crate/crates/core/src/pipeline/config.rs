//! Front-end configuration and its plain-text `key = value` form.
//!
//! Every default is a named key; `#` starts a comment; unknown keys,
//! duplicate keys and unparsable values are errors. `SPF_SEED` and
//! `SPF_THREADS` override `seed` and `threads` after the file is read.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{FrameConfig, Window};
use crate::error::{Error, Result};
use crate::perturb::{WarpConfig, WarpScheme};
use crate::pitch::{NormDomain, NormScope, PitchConfig};
use crate::resample::ResampleConfig;
use crate::vocoder::VocoderConfig;

/// Pass/fail thresholds applied by the probe battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeThresholds {
    pub max_f0_std_cents: f64,
    pub min_centroid_accuracy: f64,
    pub min_quefrency_ratio: f64,
    /// Allowed relative deviation of the mean resampled length.
    pub length_tolerance: f64,
    pub resample_runs: usize,
}

impl Default for ProbeThresholds {
    fn default() -> Self {
        Self {
            max_f0_std_cents: 10.0,
            min_centroid_accuracy: 0.95,
            min_quefrency_ratio: 0.99,
            length_tolerance: 0.05,
            resample_runs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub vocoder: VocoderConfig,
    pub n_mels: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    pub warp: WarpConfig,
    pub resample: ResampleConfig,
    pub pitch: PitchConfig,
    /// Cepstral coefficients kept for the rhythm envelope.
    pub lifter_order: usize,
    pub lifter_binarized: bool,
    /// Keep the rhythm envelope at full linear-frequency resolution instead
    /// of projecting it onto the mel filterbank.
    pub rhythm_full_resolution: bool,
    pub figure_alpha: f64,
    /// Use this warp factor for every utterance instead of drawing one.
    pub fixed_alpha: Option<f64>,
    pub seed: u64,
    pub probes: ProbeThresholds,
    /// Worker threads; `None` uses every core. Does not affect outputs.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            vocoder: VocoderConfig::default(),
            n_mels: 80,
            mel_fmin: 90.0,
            mel_fmax: 7600.0,
            warp: WarpConfig::default(),
            resample: ResampleConfig::default(),
            pitch: PitchConfig::default(),
            lifter_order: 3,
            lifter_binarized: false,
            rhythm_full_resolution: false,
            figure_alpha: 0.95,
            fixed_alpha: None,
            seed: 0,
            probes: ProbeThresholds::default(),
            threads: None,
        }
    }
}

impl FrontendConfig {
    pub fn frame(&self) -> &FrameConfig {
        &self.vocoder.frame
    }

    pub fn validate(&self) -> Result<()> {
        self.vocoder.validate()?;
        self.resample.validate()?;
        self.pitch.validate()?;
        if self.n_mels == 0 || !(0.0 <= self.mel_fmin && self.mel_fmin < self.mel_fmax) {
            return Err(Error::Config("mel filterbank needs n_mels > 0 and 0 <= fmin < fmax".into()));
        }
        if !(1..self.frame().fft_size / 2).contains(&self.lifter_order) {
            return Err(Error::Config(format!(
                "lifter_order must be in [1, {})",
                self.frame().fft_size / 2
            )));
        }
        if !(self.warp.boundary_freq > 0.0 && self.warp.boundary_freq < self.frame().nyquist()) {
            return Err(Error::Config("vtlp_boundary_hz must lie inside (0, Nyquist)".into()));
        }
        crate::perturb::WarpFactor::new(self.figure_alpha)?;
        if let Some(a) = self.fixed_alpha {
            crate::perturb::WarpFactor::new(a)?;
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    /// Short digest of every output-affecting setting, the seed included.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `SPF_SEED` / `SPF_THREADS` from `lookup`.
    pub fn apply_env_with(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = lookup("SPF_SEED") {
            self.set("seed", &v)
                .map_err(|e| Error::Config(format!("SPF_SEED: {e}")))?;
        }
        if let Some(v) = lookup("SPF_THREADS") {
            self.set("threads", &v)
                .map_err(|e| Error::Config(format!("SPF_THREADS: {e}")))?;
        }
        self.validate()
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_env_with(|k| std::env::var(k).ok())
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let f = &mut self.vocoder.frame;
        match key {
            "sample_rate" => f.sample_rate = num(v)?,
            "frame_length" => f.frame_length = num(v)?,
            "hop_length" => f.hop_length = num(v)?,
            "fft_size" => f.fft_size = num(v)?,
            "window" => f.window = Window::parse(v).map_err(|e| e.to_string())?,
            "n_mels" => self.n_mels = num(v)?,
            "mel_fmin" => self.mel_fmin = num(v)?,
            "mel_fmax" => self.mel_fmax = num(v)?,
            "f0_min" => self.vocoder.f0_min = num(v)?,
            "f0_max" => self.vocoder.f0_max = num(v)?,
            "voicing_threshold" => self.vocoder.voicing_threshold = num(v)?,
            "octave_cost" => self.vocoder.octave_cost = num(v)?,
            "octave_jump_cost" => self.vocoder.octave_jump_cost = num(v)?,
            "voiced_unvoiced_cost" => self.vocoder.voiced_unvoiced_cost = num(v)?,
            "silence_threshold" => self.vocoder.silence_threshold = num(v)?,
            "min_voiced_frames" => self.vocoder.min_voiced_frames = num(v)?,
            "envelope_order" => self.vocoder.envelope_order = num(v)?,
            "aperiodicity_band_edges" => self.vocoder.band_edges = list(v)?,
            "noise_seed" => self.vocoder.noise_seed = num(v)?,
            "vtlp_boundary_hz" => self.warp.boundary_freq = num(v)?,
            "vtlp_scheme" => {
                self.warp.scheme = match v {
                    "piecewise-linear" => WarpScheme::PiecewiseLinear,
                    _ => return Err(format!("unknown warp scheme `{v}`")),
                }
            }
            "vtlp_preserve_energy" => self.warp.preserve_energy = flag(v)?,
            "segment_length_range" => self.resample.seg_len_range = pair(v)?,
            "rate_range" => self.resample.rate_range = pair(v)?,
            "pitch_bins" => self.pitch.n_bins = num(v)?,
            "pitch_z_range" => self.pitch.z_range = pair(v)?,
            "pitch_std_floor" => self.pitch.std_floor = num(v)?,
            "pitch_domain" => {
                self.pitch.domain = match v {
                    "log" => NormDomain::Log,
                    "linear" => NormDomain::Linear,
                    _ => return Err(format!("pitch_domain must be log or linear, got `{v}`")),
                }
            }
            "pitch_scope" => {
                self.pitch.scope = match v {
                    "speaker" => NormScope::Speaker,
                    "utterance" => NormScope::Utterance,
                    _ => return Err(format!("pitch_scope must be speaker or utterance, got `{v}`")),
                }
            }
            "lifter_order" => self.lifter_order = num(v)?,
            "lifter_binarized" => self.lifter_binarized = flag(v)?,
            "rhythm_full_resolution" => self.rhythm_full_resolution = flag(v)?,
            "figure_alpha" => self.figure_alpha = num(v)?,
            "fixed_alpha" => {
                self.fixed_alpha = if v == "none" { None } else { Some(num(v)?) }
            }
            "seed" => self.seed = num(v)?,
            "threads" => self.threads = Some(num(v)?),
            "probe_max_f0_std_cents" => self.probes.max_f0_std_cents = num(v)?,
            "probe_min_centroid_accuracy" => self.probes.min_centroid_accuracy = num(v)?,
            "probe_min_quefrency_ratio" => self.probes.min_quefrency_ratio = num(v)?,
            "probe_length_tolerance" => self.probes.length_tolerance = num(v)?,
            "probe_resample_runs" => self.probes.resample_runs = num(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Renders every key; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let f = self.frame();
        let v = &self.vocoder;
        let mut s = String::new();
        let mut put = |k: &str, val: String| {
            let _ = writeln!(s, "{k} = {val}");
        };
        put("sample_rate", f.sample_rate.to_string());
        put("frame_length", f.frame_length.to_string());
        put("hop_length", f.hop_length.to_string());
        put("fft_size", f.fft_size.to_string());
        put("window", f.window.name().to_string());
        put("n_mels", self.n_mels.to_string());
        put("mel_fmin", self.mel_fmin.to_string());
        put("mel_fmax", self.mel_fmax.to_string());
        put("f0_min", v.f0_min.to_string());
        put("f0_max", v.f0_max.to_string());
        put("voicing_threshold", v.voicing_threshold.to_string());
        put("octave_cost", v.octave_cost.to_string());
        put("octave_jump_cost", v.octave_jump_cost.to_string());
        put("voiced_unvoiced_cost", v.voiced_unvoiced_cost.to_string());
        put("silence_threshold", v.silence_threshold.to_string());
        put("min_voiced_frames", v.min_voiced_frames.to_string());
        put("envelope_order", v.envelope_order.to_string());
        put(
            "aperiodicity_band_edges",
            v.band_edges.iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
        );
        put("noise_seed", v.noise_seed.to_string());
        put("vtlp_boundary_hz", self.warp.boundary_freq.to_string());
        put("vtlp_scheme", "piecewise-linear".to_string());
        put("vtlp_preserve_energy", self.warp.preserve_energy.to_string());
        let (a, b) = self.resample.seg_len_range;
        put("segment_length_range", format!("{a}, {b}"));
        let (a, b) = self.resample.rate_range;
        put("rate_range", format!("{a}, {b}"));
        put("pitch_bins", self.pitch.n_bins.to_string());
        let (a, b) = self.pitch.z_range;
        put("pitch_z_range", format!("{a}, {b}"));
        put("pitch_std_floor", self.pitch.std_floor.to_string());
        let domain = match self.pitch.domain {
            NormDomain::Log => "log",
            NormDomain::Linear => "linear",
        };
        put("pitch_domain", domain.to_string());
        let scope = match self.pitch.scope {
            NormScope::Speaker => "speaker",
            NormScope::Utterance => "utterance",
        };
        put("pitch_scope", scope.to_string());
        put("lifter_order", self.lifter_order.to_string());
        put("lifter_binarized", self.lifter_binarized.to_string());
        put("rhythm_full_resolution", self.rhythm_full_resolution.to_string());
        put("figure_alpha", self.figure_alpha.to_string());
        put(
            "fixed_alpha",
            self.fixed_alpha.map_or("none".to_string(), |a| a.to_string()),
        );
        put("seed", self.seed.to_string());
        if let Some(t) = self.threads {
            put("threads", t.to_string());
        }
        let p = &self.probes;
        put("probe_max_f0_std_cents", p.max_f0_std_cents.to_string());
        put("probe_min_centroid_accuracy", p.min_centroid_accuracy.to_string());
        put("probe_min_quefrency_ratio", p.min_quefrency_ratio.to_string());
        put("probe_length_tolerance", p.length_tolerance.to_string());
        put("probe_resample_runs", p.resample_runs.to_string());
        s
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|p| num(p.trim())).collect()
}

fn pair<T: FromStr>(v: &str) -> std::result::Result<(T, T), String> {
    let mut items: Vec<T> = list(v)?;
    if items.len() != 2 {
        return Err(format!("expected two comma-separated values, got `{v}`"));
    }
    let b = items.pop().unwrap();
    let a = items.pop().unwrap();
    Ok((a, b))
}
