//! Property probes over a corpus or a built-in synthetic suite: pitch
//! flattening, VTLP direction, envelope smoothness and resampling length.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::audio::read_wav;
use super::builders::{derive_seed, stream_rng, Frontend, Stream};
use super::config::ProbeThresholds;
use super::manifest::CorpusManifest;
use super::tensor::write_atomic;
use crate::dsp::{quefrency_energy_ratio, real_cepstrum_of_magnitude, Waveform};
use crate::error::Result;
use crate::par;
use crate::perturb::{vtlp_warp, WarpFactor, ALPHA_MAX, ALPHA_MIN};
use crate::resample::plan_segments;
use crate::synthetic::VowelSpec;
use crate::vocoder::estimate_f0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub runs: usize,
    pub input_frames: usize,
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeChecks {
    pub f0_flat: bool,
    pub centroid_direction: bool,
    pub envelope_smooth: bool,
    pub length_neutral: bool,
}

impl ProbeChecks {
    pub fn all(&self) -> bool {
        self.f0_flat && self.centroid_direction && self.envelope_smooth && self.length_neutral
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceProbe {
    pub utterance_id: String,
    /// Voiced F0 spread after monotonizing; `None` if nothing was voiced.
    pub voiced_f0_std_cents: Option<f64>,
    /// Share of frame comparisons where α = 0.9 lowered and α = 1.1 raised
    /// the spectral centroid.
    pub centroid_shift_sign_accuracy: f64,
    pub envelope_quefrency_energy_ratio: f64,
    pub resample_length_stats: LengthStats,
    pub checks: ProbeChecks,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateProbe {
    pub utterances: usize,
    pub max_voiced_f0_std_cents: Option<f64>,
    pub min_centroid_shift_sign_accuracy: f64,
    pub min_envelope_quefrency_energy_ratio: f64,
    pub mean_length_ratio: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub source: String,
    pub seed: u64,
    pub thresholds: ProbeThresholds,
    pub utterances: Vec<UtteranceProbe>,
    pub aggregate: AggregateProbe,
    pub passed: bool,
}

impl ProbeReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }
}

pub enum ProbeSource<'a> {
    Synthetic,
    Manifest(&'a CorpusManifest),
}

/// Built-in utterances: vibrato vowels across the voice range, with and
/// without syllable gating and aspiration noise.
pub fn synthetic_suite(sample_rate: u32) -> Vec<(String, Waveform)> {
    let specs = [
        ("vibrato_220", VowelSpec::default().vibrato(50.0).duration(2.0).noise(0.02)),
        (
            "syllables_150",
            VowelSpec::default().f0(150.0).vibrato(30.0).syllables(4).duration(2.0).noise(0.05),
        ),
        ("vibrato_300", VowelSpec::default().f0(300.0).vibrato(60.0).duration(1.5).seed(2)),
        ("vibrato_110", VowelSpec::default().f0(110.0).vibrato(40.0).duration(1.5).seed(3)),
    ];
    specs
        .into_iter()
        .map(|(id, mut s)| {
            s.sample_rate = sample_rate;
            (id.to_string(), s.render())
        })
        .collect()
}

fn probe_one(id: &str, x: &Waveform, fe: &Frontend) -> Result<UtteranceProbe> {
    let cfg = &fe.config;
    let th = &cfg.probes;
    let p = fe.perturb(x, WarpFactor::new(1.0)?)?;
    let f0_std = estimate_f0(&p.monotonic, &cfg.vocoder)?.voiced_std_cents();

    let base = &p.monotonic_spec;
    let down = vtlp_warp(base, &WarpFactor::new(ALPHA_MIN)?, &cfg.warp)?.centroids_hz();
    let up = vtlp_warp(base, &WarpFactor::new(ALPHA_MAX)?, &cfg.warp)?.centroids_hz();
    let mid = base.centroids_hz();
    let energy: Vec<f64> = base.data.rows().into_iter().map(|r| r.dot(&r)).collect();
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    let active: Vec<usize> = (0..energy.len())
        .filter(|&t| peak > 0.0 && energy[t] >= 1e-4 * peak)
        .collect();
    let correct = active
        .iter()
        .map(|&t| (down[t] < mid[t]) as usize + (up[t] > mid[t]) as usize)
        .sum::<usize>();
    let centroid_acc = if active.is_empty() {
        1.0
    } else {
        correct as f64 / (2 * active.len()) as f64
    };

    let recep = real_cepstrum_of_magnitude(&fe.envelope(&p.spec)?)?;
    let quef = recep
        .data
        .rows()
        .into_iter()
        .map(|r| quefrency_energy_ratio(&r.to_vec(), cfg.lifter_order))
        .fold(1.0, f64::min);

    let t = base.num_frames();
    let seed = derive_seed(cfg.seed, id);
    let mut rng = stream_rng(seed, Stream::Content);
    let ratios: Vec<f64> = (0..th.resample_runs.max(1))
        .map(|_| {
            let n: usize = plan_segments(t, &mut rng, &cfg.resample)
                .iter()
                .map(|s| s.out_len)
                .sum();
            n as f64 / t as f64
        })
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let lengths = LengthStats {
        runs: ratios.len(),
        input_frames: t,
        mean_ratio,
        min_ratio: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
    };

    let checks = ProbeChecks {
        f0_flat: f0_std.is_none_or(|s| s < th.max_f0_std_cents),
        centroid_direction: centroid_acc >= th.min_centroid_accuracy,
        envelope_smooth: quef >= th.min_quefrency_ratio,
        length_neutral: (mean_ratio - 1.0).abs() <= th.length_tolerance,
    };
    Ok(UtteranceProbe {
        utterance_id: id.to_string(),
        voiced_f0_std_cents: f0_std,
        centroid_shift_sign_accuracy: centroid_acc,
        envelope_quefrency_energy_ratio: quef,
        resample_length_stats: lengths,
        checks,
        error: None,
    })
}

fn failed_probe(id: &str, error: String) -> UtteranceProbe {
    UtteranceProbe {
        utterance_id: id.to_string(),
        voiced_f0_std_cents: None,
        centroid_shift_sign_accuracy: 0.0,
        envelope_quefrency_energy_ratio: 0.0,
        resample_length_stats: LengthStats {
            runs: 0,
            input_frames: 0,
            mean_ratio: 0.0,
            min_ratio: 0.0,
            max_ratio: 0.0,
        },
        checks: ProbeChecks {
            f0_flat: false,
            centroid_direction: false,
            envelope_smooth: false,
            length_neutral: false,
        },
        error: Some(error),
    }
}

/// Runs the probe battery. Never fails on bad audio: such utterances are
/// reported as failed entries.
pub fn run_probes(source: ProbeSource<'_>, fe: &Frontend) -> ProbeReport {
    let sr = fe.config.frame().sample_rate;
    let (label, utterances) = match source {
        ProbeSource::Synthetic => {
            let suite = synthetic_suite(sr);
            let probes = par::map_slice(&suite, |(id, x)| {
                probe_one(id, x, fe).unwrap_or_else(|e| failed_probe(id, e.to_string()))
            });
            ("synthetic".to_string(), probes)
        }
        ProbeSource::Manifest(m) => {
            let probes = par::map_slice(&m.entries, |e| {
                read_wav(&e.file_path, sr)
                    .and_then(|x| probe_one(&e.utterance_id, &x, fe))
                    .unwrap_or_else(|err| failed_probe(&e.utterance_id, err.to_string()))
            });
            (m.root.display().to_string(), probes)
        }
    };
    let ok: Vec<&UtteranceProbe> = utterances.iter().filter(|u| u.error.is_none()).collect();
    let failures = utterances.iter().filter(|u| !u.checks.all()).count();
    let aggregate = AggregateProbe {
        utterances: utterances.len(),
        max_voiced_f0_std_cents: ok
            .iter()
            .filter_map(|u| u.voiced_f0_std_cents)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
        min_centroid_shift_sign_accuracy: ok
            .iter()
            .map(|u| u.centroid_shift_sign_accuracy)
            .fold(1.0, f64::min),
        min_envelope_quefrency_energy_ratio: ok
            .iter()
            .map(|u| u.envelope_quefrency_energy_ratio)
            .fold(1.0, f64::min),
        mean_length_ratio: if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|u| u.resample_length_stats.mean_ratio).sum::<f64>() / ok.len() as f64
        },
        failures,
    };
    ProbeReport {
        source: label,
        seed: fe.config.seed,
        thresholds: fe.config.probes,
        passed: failures == 0 && !utterances.is_empty(),
        utterances,
        aggregate,
    }
}
