//! Assembly of the four encoder inputs for one utterance.
//!
//! ```text
//! x ─ analyze ─┬─ smooth F0 ─ synthesize ─ STFT ─ VTLP(α) ─┬─ mel ─ R ──────────── S_c
//!              │                                          ├─ cepstrum ─ lifter ─ R ─ S_r
//!              │                                          └─ mel ─┐
//!              └─ F0 ─ normalize ─ one-hot ─┬─ R ──────────────── │ ──────────── P_r
//!                                           └─────────── concat ─┴─ R ──────── S_p
//! ```
//!
//! Every `R` draws from its own ChaCha stream of the utterance seed, so the
//! four inputs are resampled independently while the whole set stays a pure
//! function of `(audio, config, seed)`.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::FrontendConfig;
use crate::dsp::{
    envelope_from_cepstrum, lifter_cepstrum, make_lifter, make_lifter_binarized,
    real_cepstrum_of_magnitude, stft, Lifter, MagnitudeSpectrogram, MelFilterbank,
    MelSpectrogram, Waveform,
};
use crate::error::{Error, Result};
use crate::perturb::{sample_alpha, vtlp_warp, WarpFactor};
use crate::pitch::{
    build_pitch_converter_input, compute_speaker_stats, normalize_contour, quantize_onehot,
    NormScope, OneHotPitch, PitchConverterInput, SpeakerStats,
};
use crate::resample::{random_resample, FeatureKind, FeatureSequence};
use crate::vocoder::{smooth_pitch, PitchContour, SimpleVocoder, Vocoder};

/// Speaker id → statistics.
pub type StatsStore = BTreeMap<String, SpeakerStats>;

/// Per-utterance seed: the first 8 bytes of
/// `sha256(master_seed_le || utterance_id)`.
pub fn derive_seed(master_seed: u64, utterance_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(utterance_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Independent random streams drawn from one utterance seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Alpha = 0,
    Content = 1,
    Rhythm = 2,
    Pitch = 3,
    Converter = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub alpha: f64,
    pub n_c: usize,
    pub config_hash: String,
}

/// Everything the encoders consume for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInputs {
    /// Log-mel spectrogram of the untouched input (the reconstruction target).
    pub s: MelSpectrogram,
    /// Resampled log-mel of the monotonic, warped utterance.
    pub s_c: FeatureSequence,
    /// Resampled low-order cepstral envelope of the same utterance.
    pub s_r: FeatureSequence,
    /// Resampled one-hot pitch contour.
    pub p_r: FeatureSequence,
    pub s_p: PitchConverterInput,
    pub provenance: Provenance,
}

impl EncoderInputs {
    /// Named matrices in a fixed order, as written to disk.
    pub fn tensors(&self) -> [(&'static str, &Array2<f64>); 5] {
        [
            ("S", &self.s.data),
            ("S_c", &self.s_c.data),
            ("S_r", &self.s_r.data),
            ("P_r", &self.p_r.data),
            ("S_p", &self.s_p.data.data),
        ]
    }
}

/// Intermediate signals shared by the builders.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub monotonic: Waveform,
    pub pitch: PitchContour,
    pub alpha: WarpFactor,
    /// Linear magnitude spectrogram of the monotonic utterance.
    pub monotonic_spec: MagnitudeSpectrogram,
    /// The same after VTLP.
    pub spec: MagnitudeSpectrogram,
}

/// Reusable front end: the vocoder, mel filterbank and lifter are built once.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub config: FrontendConfig,
    vocoder: SimpleVocoder,
    mel: MelFilterbank,
    lifter: Lifter,
    hash: String,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        config.validate()?;
        let frame = *config.frame();
        let mel = MelFilterbank::new(config.n_mels, config.mel_fmin, config.mel_fmax, &frame)?;
        let lifter = if config.lifter_binarized {
            make_lifter_binarized(config.lifter_order, frame.fft_size)?
        } else {
            make_lifter(config.lifter_order, frame.fft_size)?
        };
        Ok(Self {
            vocoder: SimpleVocoder::new(config.vocoder.clone())?,
            hash: config.hash(),
            config,
            mel,
            lifter,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn vocoder(&self) -> &SimpleVocoder {
        &self.vocoder
    }

    pub fn mel(&self) -> &MelFilterbank {
        &self.mel
    }

    fn check_rate(&self, x: &Waveform) -> Result<()> {
        let sr = self.config.frame().sample_rate;
        if x.sample_rate != sr {
            return Err(Error::InvalidInput(format!(
                "audio is at {} Hz, front end expects {sr} Hz",
                x.sample_rate
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidInput("empty audio".into()));
        }
        Ok(())
    }

    pub fn magnitude(&self, x: &Waveform) -> Result<MagnitudeSpectrogram> {
        Ok(stft(x, self.config.frame())?.magnitude())
    }

    /// `α` from the config override or drawn from `rng`.
    pub fn draw_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WarpFactor> {
        match self.config.fixed_alpha {
            Some(a) => WarpFactor::new(a),
            None => Ok(sample_alpha(rng, None)),
        }
    }

    /// Monotonic re-synthesis followed by VTLP of its spectrogram.
    pub fn perturb(&self, x: &Waveform, alpha: WarpFactor) -> Result<Perturbed> {
        self.check_rate(x)?;
        let analysis = self.vocoder.analyze(x)?;
        let smoothed = smooth_pitch(&analysis.pitch);
        let mut monotonic = self.vocoder.synthesize(
            &smoothed.contour,
            &analysis.aperiodicity,
            &analysis.envelope,
        )?;
        monotonic.samples.resize(x.len(), 0.0);
        let monotonic_spec = self.magnitude(&monotonic)?;
        let spec = vtlp_warp(&monotonic_spec, &alpha, &self.config.warp)?;
        Ok(Perturbed {
            monotonic,
            pitch: analysis.pitch,
            alpha,
            monotonic_spec,
            spec,
        })
    }

    /// Log-mel of the perturbed spectrogram, before resampling.
    pub fn content_features(&self, p: &Perturbed) -> Result<FeatureSequence> {
        FeatureSequence::new(self.mel.project(&p.spec)?.data, FeatureKind::Mel)
    }

    /// Liftered cepstral envelope `exp(DFT(l ⊙ c))` of a linear spectrogram.
    pub fn envelope(&self, spec: &MagnitudeSpectrogram) -> Result<MagnitudeSpectrogram> {
        let c = real_cepstrum_of_magnitude(spec)?;
        envelope_from_cepstrum(&lifter_cepstrum(&c, &self.lifter)?)
    }

    /// Rhythm features before resampling: the envelope, projected onto the
    /// mel filterbank (linear, no log) unless full resolution is requested.
    pub fn rhythm_features(&self, p: &Perturbed) -> Result<FeatureSequence> {
        let env = self.envelope(&p.spec)?;
        let data = if self.config.rhythm_full_resolution {
            env.data
        } else {
            self.mel.project_linear(&env)?
        };
        FeatureSequence::new(data, FeatureKind::Envelope)
    }

    pub fn pitch_onehot(&self, pitch: &PitchContour, stats: &SpeakerStats) -> OneHotPitch {
        let pc = &self.config.pitch;
        quantize_onehot(&normalize_contour(pitch, stats, pc.domain), pc.n_bins, pc.z_range)
    }

    /// Statistics used to normalize `pitch`: the stored speaker statistics, or
    /// the utterance's own in utterance scope.
    pub fn stats_for(
        &self,
        pitch: &PitchContour,
        speaker_id: &str,
        store: &StatsStore,
    ) -> Result<SpeakerStats> {
        match self.config.pitch.scope {
            NormScope::Speaker => store
                .get(speaker_id)
                .cloned()
                .ok_or_else(|| Error::StatsNotFound(speaker_id.to_string())),
            NormScope::Utterance => {
                match compute_speaker_stats(std::slice::from_ref(pitch), speaker_id, &self.config.pitch)
                {
                    Ok(s) => Ok(s),
                    // Nothing voiced: every frame lands in the unvoiced column,
                    // so the statistics are never read.
                    Err(Error::InsufficientData(_)) => Ok(SpeakerStats {
                        speaker_id: speaker_id.to_string(),
                        log_f0_mean: 0.0,
                        log_f0_std: 1.0,
                        frame_count: 0,
                    }),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// `S_c = R(mel(VTLP(|STFT(monotonize(x))|, α)))`, drawing α and the
    /// resampling from `rng`.
    pub fn build_content_input<R: Rng + ?Sized>(
        &self,
        x: &Waveform,
        rng: &mut R,
    ) -> Result<FeatureSequence> {
        let alpha = self.draw_alpha(rng)?;
        let p = self.perturb(x, alpha)?;
        random_resample(&self.content_features(&p)?, rng, &self.config.resample)
    }

    /// `S_r = R(exp(DFT(l ⊙ c)))` of the perturbed utterance.
    pub fn build_rhythm_input<R: Rng + ?Sized>(
        &self,
        x: &Waveform,
        rng: &mut R,
    ) -> Result<FeatureSequence> {
        let alpha = self.draw_alpha(rng)?;
        let p = self.perturb(x, alpha)?;
        random_resample(&self.rhythm_features(&p)?, rng, &self.config.resample)
    }

    /// `R(P)`: the resampled one-hot contour of the original F0.
    pub fn build_pitch_input<R: Rng + ?Sized>(
        &self,
        x: &Waveform,
        speaker_id: &str,
        store: &StatsStore,
        rng: &mut R,
    ) -> Result<FeatureSequence> {
        self.check_rate(x)?;
        let pitch = self.vocoder.analyze(x)?.pitch;
        let stats = self.stats_for(&pitch, speaker_id, store)?;
        random_resample(
            &self.pitch_onehot(&pitch, &stats).into_sequence(),
            rng,
            &self.config.resample,
        )
    }

    /// All encoder inputs for one utterance from a single vocoder analysis.
    /// Errors carry the utterance id.
    pub fn build_all(
        &self,
        x: &Waveform,
        utterance_id: &str,
        speaker_id: &str,
        store: &StatsStore,
        seed: u64,
    ) -> Result<EncoderInputs> {
        self.build_all_inner(x, speaker_id, store, seed)
            .map_err(|e| e.in_utterance(utterance_id))
    }

    fn build_all_inner(
        &self,
        x: &Waveform,
        speaker_id: &str,
        store: &StatsStore,
        seed: u64,
    ) -> Result<EncoderInputs> {
        let alpha = self.draw_alpha(&mut stream_rng(seed, Stream::Alpha))?;
        let p = self.perturb(x, alpha)?;
        let stats = self.stats_for(&p.pitch, speaker_id, store)?;
        let onehot = self.pitch_onehot(&p.pitch, &stats);
        let resample = &self.config.resample;

        let s = self.mel.project(&self.magnitude(x)?)?;
        let content = self.content_features(&p)?;
        let s_c = random_resample(&content, &mut stream_rng(seed, Stream::Content), resample)?;
        let s_r = random_resample(
            &self.rhythm_features(&p)?,
            &mut stream_rng(seed, Stream::Rhythm),
            resample,
        )?;
        let p_r = random_resample(
            &onehot.clone().into_sequence(),
            &mut stream_rng(seed, Stream::Pitch),
            resample,
        )?;
        let s_p = build_pitch_converter_input(
            &content,
            &onehot,
            &mut stream_rng(seed, Stream::Converter),
            resample,
        )?;
        Ok(EncoderInputs {
            s,
            s_c,
            s_r,
            p_r,
            s_p,
            provenance: Provenance {
                seed,
                alpha: alpha.alpha,
                n_c: self.config.lifter_order,
                config_hash: self.hash.clone(),
            },
        })
    }
}
