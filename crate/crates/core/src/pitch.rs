//! Speaker-level pitch normalization, one-hot quantization and the joint
//! spectrogram/pitch input for the pitch converter.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::{
    random_resample_traced, FeatureKind, FeatureSequence, ResampleConfig, SourcePos,
};
use crate::vocoder::PitchContour;

/// Domain in which F0 is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormDomain {
    Log,
    Linear,
}

impl NormDomain {
    fn map(self, f0: f64) -> f64 {
        match self {
            NormDomain::Log => f0.ln(),
            NormDomain::Linear => f0,
        }
    }
}

/// Whose statistics normalize an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    Speaker,
    Utterance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub n_bins: usize,
    pub z_range: (f64, f64),
    pub std_floor: f64,
    pub domain: NormDomain,
    pub scope: NormScope,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            n_bins: 256,
            z_range: (-4.0, 4.0),
            std_floor: 1e-3,
            domain: NormDomain::Log,
            scope: NormScope::Speaker,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::Config("pitch n_bins must be at least 2".into()));
        }
        if !(self.z_range.0 < self.z_range.1) {
            return Err(Error::Config("pitch z_range must be increasing".into()));
        }
        if !(self.std_floor > 0.0) {
            return Err(Error::Config("pitch std_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Per-speaker F0 statistics. Persisted as
/// `{speaker_id, log_f0_mean, log_f0_std, frame_count}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub speaker_id: String,
    pub log_f0_mean: f64,
    pub log_f0_std: f64,
    pub frame_count: u64,
}

/// Welford accumulator; `merge` is associative so partial results from
/// different files or threads can be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StatsAccumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl StatsAccumulator {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn push_contour(&mut self, p: &PitchContour, domain: NormDomain) {
        for f in p.voiced_values() {
            self.push(domain.map(f));
        }
    }

    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Self { count, mean, m2 }
    }

    /// Population statistics, std clamped to `std_floor`.
    pub fn finish(&self, speaker_id: &str, std_floor: f64) -> Result<SpeakerStats> {
        if self.count == 0 {
            return Err(Error::InsufficientData(format!(
                "speaker {speaker_id:?} has no voiced frames"
            )));
        }
        let std = (self.m2 / self.count as f64).max(0.0).sqrt();
        Ok(SpeakerStats {
            speaker_id: speaker_id.to_string(),
            log_f0_mean: self.mean,
            log_f0_std: std.max(std_floor),
            frame_count: self.count,
        })
    }
}

pub fn compute_speaker_stats(
    contours: &[PitchContour],
    speaker_id: &str,
    cfg: &PitchConfig,
) -> Result<SpeakerStats> {
    let mut acc = StatsAccumulator::default();
    for c in contours {
        acc.push_contour(c, cfg.domain);
    }
    acc.finish(speaker_id, cfg.std_floor)
}

/// Voiced frames as z-scores; unvoiced frames carry `z = 0` and are
/// flagged by `voiced`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedContour {
    pub z: Vec<f64>,
    pub voiced: Vec<bool>,
}

pub fn normalize_contour(
    p: &PitchContour,
    stats: &SpeakerStats,
    domain: NormDomain,
) -> NormalizedContour {
    let z = p
        .f0
        .iter()
        .zip(&p.voiced)
        .map(|(&f, &v)| {
            if v {
                (domain.map(f) - stats.log_f0_mean) / stats.log_f0_std
            } else {
                0.0
            }
        })
        .collect();
    NormalizedContour {
        z,
        voiced: p.voiced.clone(),
    }
}

/// T x (n_bins + 1) one-hot matrix; the last column flags unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotPitch {
    pub data: Array2<f64>,
    pub n_bins: usize,
}

impl OneHotPitch {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.n_bins + 1
    }

    pub fn into_sequence(self) -> FeatureSequence {
        FeatureSequence {
            data: self.data,
            kind: FeatureKind::OneHot,
        }
    }
}

/// Bin of a voiced z-score: `floor((z - lo) / (hi - lo) * n_bins)`, clipped
/// to `[0, n_bins - 1]`.
pub fn quantize_bin(z: f64, n_bins: usize, z_range: (f64, f64)) -> usize {
    let (lo, hi) = z_range;
    let z = z.clamp(lo, hi);
    let b = ((z - lo) / (hi - lo) * n_bins as f64).floor();
    (b.max(0.0) as usize).min(n_bins - 1)
}

pub fn quantize_onehot(z: &NormalizedContour, n_bins: usize, z_range: (f64, f64)) -> OneHotPitch {
    let mut data = Array2::zeros((z.z.len(), n_bins + 1));
    for (t, (&v, &voiced)) in z.z.iter().zip(&z.voiced).enumerate() {
        let col = if voiced {
            quantize_bin(v, n_bins, z_range)
        } else {
            n_bins
        };
        data[[t, col]] = 1.0;
    }
    OneHotPitch { data, n_bins }
}

/// Joint spectrogram/one-hot frames after a single resampling pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchConverterInput {
    pub data: FeatureSequence,
    pub spec_width: usize,
    pub onehot_width: usize,
    /// Source frame of every output row, shared by both halves.
    pub provenance: Vec<SourcePos>,
}

/// Framewise concatenation `[spec_t; pitch_t]` resampled as one sequence.
/// Frame counts may differ by up to two; the longer input is truncated.
pub fn build_pitch_converter_input<R: Rng + ?Sized>(
    spec_perturbed: &FeatureSequence,
    p: &OneHotPitch,
    rng: &mut R,
    cfg: &ResampleConfig,
) -> Result<PitchConverterInput> {
    let (ts, tp) = (spec_perturbed.len(), p.num_frames());
    if ts.abs_diff(tp) > 2 {
        return Err(Error::Alignment { spec: ts, pitch: tp });
    }
    let t = ts.min(tp);
    let spec_width = spec_perturbed.width();
    let joint = concatenate(
        Axis(1),
        &[
            spec_perturbed.data.slice(s![..t, ..]),
            p.data.slice(s![..t, ..]),
        ],
    )
    .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let seq = FeatureSequence::new(
        joint,
        FeatureKind::Concat {
            onehot_from: spec_width,
        },
    )?;
    let (data, provenance) = random_resample_traced(&seq, rng, cfg)?;
    Ok(PitchConverterInput {
        data,
        spec_width,
        onehot_width: p.width(),
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(f: f64, n: usize) -> PitchContour {
        PitchContour::new(vec![f; n], vec![true; n], 256, 16_000).unwrap()
    }

    #[test]
    fn constant_speaker_std_is_floored() {
        let s = compute_speaker_stats(&[flat(200.0, 10)], "p1", &PitchConfig::default()).unwrap();
        assert!((s.log_f0_mean - 200f64.ln()).abs() < 1e-12);
        assert_eq!(s.log_f0_std, 1e-3);
        assert_eq!(s.frame_count, 10);
    }

    #[test]
    fn two_point_statistics() {
        let e = std::f64::consts::E;
        let s = compute_speaker_stats(
            &[flat(150.0, 8), flat(e * 150.0, 8)],
            "p2",
            &PitchConfig::default(),
        )
        .unwrap();
        assert!((s.log_f0_mean - (150f64.ln() + 0.5)).abs() < 1e-12);
        assert!((s.log_f0_std - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_voiced_frames_is_insufficient() {
        let c = PitchContour::unvoiced(5, 256, 16_000);
        assert!(matches!(
            compute_speaker_stats(&[c], "x", &PitchConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn z_of_mean_and_one_std() {
        let stats = SpeakerStats {
            speaker_id: "s".into(),
            log_f0_mean: 5.0,
            log_f0_std: 0.2,
            frame_count: 2,
        };
        let p = PitchContour::new(
            vec![5f64.exp(), 0.0, 5.2f64.exp()],
            vec![true, false, true],
            256,
            16_000,
        )
        .unwrap();
        let z = normalize_contour(&p, &stats, NormDomain::Log);
        assert!(z.z[0].abs() < 1e-12);
        assert!((z.z[2] - 1.0).abs() < 1e-12);
        assert!(!z.voiced[1]);
    }

    #[test]
    fn bin_boundaries() {
        assert_eq!(quantize_bin(-4.0, 256, (-4.0, 4.0)), 0);
        assert_eq!(quantize_bin(4.0, 256, (-4.0, 4.0)), 255);
        assert_eq!(quantize_bin(0.0, 256, (-4.0, 4.0)), 128);
        assert_eq!(quantize_bin(-100.0, 256, (-4.0, 4.0)), 0);
        assert_eq!(quantize_bin(100.0, 256, (-4.0, 4.0)), 255);
    }

    #[test]
    fn unvoiced_goes_to_last_column() {
        let z = NormalizedContour {
            z: vec![0.0, 1.0],
            voiced: vec![false, true],
        };
        let oh = quantize_onehot(&z, 8, (-4.0, 4.0));
        assert_eq!(oh.data.row(0).to_vec(), vec![0., 0., 0., 0., 0., 0., 0., 0., 1.]);
        assert_eq!(oh.data[[1, 5]], 1.0);
        assert_eq!(oh.data.row(1).sum(), 1.0);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let spec = FeatureSequence::new(Array2::zeros((10, 4)), FeatureKind::Mel).unwrap();
        let z = NormalizedContour {
            z: vec![0.0; 14],
            voiced: vec![true; 14],
        };
        let oh = quantize_onehot(&z, 8, (-4.0, 4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            build_pitch_converter_input(&spec, &oh, &mut rng, &ResampleConfig::identity()),
            Err(Error::Alignment { spec: 10, pitch: 14 })
        ));
    }

    #[test]
    fn unit_rate_concatenation() {
        let spec = FeatureSequence::new(
            Array2::from_shape_fn((11, 3), |(t, d)| (t * 3 + d) as f64),
            FeatureKind::Mel,
        )
        .unwrap();
        let z = NormalizedContour {
            z: (0..12).map(|t| t as f64 * 0.5 - 3.0).collect(),
            voiced: vec![true; 12],
        };
        let oh = quantize_onehot(&z, 16, (-4.0, 4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = build_pitch_converter_input(&spec, &oh, &mut rng, &ResampleConfig::identity())
            .unwrap();
        assert_eq!(out.data.width(), 3 + 17);
        assert_eq!(out.data.len(), 11);
        assert_eq!(out.data.data.slice(s![.., ..3]), spec.data);
        assert_eq!(out.data.data.slice(s![.., 3..]), oh.data.slice(s![..11, ..]));
    }
}
