//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are fixed constants below.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use spf_core::dsp::{
    envelope_from_cepstrum, istft, lifter_cepstrum, make_lifter, quefrency_energy_ratio,
    real_cepstrum, real_cepstrum_of_magnitude, stft, Cepstrum, FrameConfig, Lifter,
    MagnitudeSpectrogram, Waveform,
};
use spf_core::perturb::{sample_alpha, vtlp_warp, WarpFactor, WarpMap, ALPHA_MAX, ALPHA_MIN};
use spf_core::pipeline::audio::write_wav;
use spf_core::pipeline::{stream_rng, Fig2Metrics, Frontend, FrontendConfig, ProbeReport, Stream, Tensor};
use spf_core::pitch::{build_pitch_converter_input, compute_speaker_stats, PitchConfig};
use spf_core::resample::{
    plan_segments, random_resample, random_resample_traced, FeatureKind, FeatureSequence,
    ResampleConfig,
};
use spf_core::synthetic::{white_noise, VowelSpec, VOWEL_A};
use spf_core::vocoder::{analyze, estimate_f0, monotonize, smooth_pitch, synthesize, SimpleVocoder, VocoderConfig};

const MAX_MONOTONIC_STD_CENTS: f64 = 10.0;
const MONOTONIZE_BUDGET: Duration = Duration::from_secs(5);
const VTLP_BUDGET: Duration = Duration::from_secs(2);
const IDENTITY_TOL: f64 = 1e-9;
const ALPHA_DRAWS: usize = 100_000;
const ALPHA_MEAN_RANGE: (f64, f64) = (0.995, 1.005);
const LIFTER_N_C: usize = 3;
const MIN_LOW_QUEFRENCY_SHARE: f64 = 0.99;
const MAX_RHYTHM_REL_DIFF: f64 = 0.10;
const MIN_RAW_REL_DIFF: f64 = 0.50;
const RESAMPLE_RUNS: usize = 1000;
const LENGTH_TOL: f64 = 0.05;
const ALLPASS_REL_TOL: f64 = 1e-6;
const MAX_IMAG_RESIDUE: f64 = 1e-9;
const MIN_STFT_SNR_DB: f64 = 40.0;
const F0_REL_TOL: f64 = 0.03;
const FORMANT_BIN_TOL: usize = 1;
const PROBE_BUDGET: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn frame_cfg() -> FrameConfig {
    FrameConfig::default()
}

fn local_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len() - 1).filter(|&k| v[k] > v[k - 1] && v[k] >= v[k + 1]).collect()
}

fn nearest(peaks: &[usize], target: f64) -> Option<usize> {
    peaks
        .iter()
        .copied()
        .min_by(|&a, &b| (a as f64 - target).abs().total_cmp(&(b as f64 - target).abs()))
}

/// Peak bins of the resonator cascade `VowelSpec` renders with, from its
/// filter coefficients.
fn designed_formant_bins(cfg: &FrameConfig) -> Vec<usize> {
    let sr = cfg.sample_rate as f64;
    let response: Vec<f64> = (0..cfg.n_bins())
        .map(|k| {
            let z1 = Complex64::from_polar(1.0, -2.0 * PI * cfg.bin_hz(k as f64) / sr);
            VOWEL_A
                .iter()
                .map(|&(fc, bw)| {
                    let r = (-PI * bw / sr).exp();
                    let a1 = 2.0 * r * (2.0 * PI * fc / sr).cos();
                    let a2 = -r * r;
                    (1.0 - a1 - a2) / (1.0 - a1 * z1 - a2 * z1 * z1).norm()
                })
                .product()
        })
        .collect();
    local_maxima(&response)
}

/// Frame-averaged log envelope with a cepstral order high enough to
/// resolve formants but not harmonics.
fn mean_log_envelope(spec: &MagnitudeSpectrogram, order: usize) -> Vec<f64> {
    let c = real_cepstrum_of_magnitude(spec).unwrap();
    let env = envelope_from_cepstrum(&lifter_cepstrum(&c, &make_lifter(order, c.fft_size()).unwrap()).unwrap())
        .unwrap();
    let t = env.num_frames() as f64;
    (0..env.num_bins())
        .map(|k| env.data.column(k).iter().map(|v| v.ln()).sum::<f64>() / t)
        .collect()
}

fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

fn framewise_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> (f64, f64) {
    let t = a.nrows().min(b.nrows());
    let diffs: Vec<f64> = (0..t)
        .map(|i| relative_l2(&a.row(i).to_vec(), &b.row(i).to_vec()))
        .collect();
    let mean = diffs.iter().sum::<f64>() / t as f64;
    (mean, diffs.iter().cloned().fold(0.0, f64::max))
}

fn pitch_removal() -> Outcome {
    let cfg = VocoderConfig::default();
    let x = VowelSpec::default().f0(220.0).vibrato(50.0).duration(2.0).render();
    let start = Instant::now();
    let vocoder = SimpleVocoder::new(cfg.clone()).map_err(|e| e.to_string())?;
    let y = monotonize(&x, &vocoder).map_err(|e| e.to_string())?;
    let after = estimate_f0(&y, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let before = analyze(&x, &cfg).map_err(|e| e.to_string())?.pitch;
    let smoothed = smooth_pitch(&before).contour;
    let values: Vec<f64> = smoothed.voiced_values().collect();
    check(!values.is_empty() && values.iter().all(|&v| v == values[0]), || {
        "smoothed voiced F0 is not constant".into()
    })?;
    check(smoothed.voiced_std_cents() == Some(0.0), || "smoothed variance is not exactly zero".into())?;

    let std_in = before.voiced_std_cents().unwrap_or(0.0);
    let std_out = after.voiced_std_cents().ok_or("monotonic signal has no voiced frames")?;
    check(std_out < MAX_MONOTONIC_STD_CENTS, || format!("monotonic std {std_out:.2} cents"))?;
    check(elapsed < MONOTONIZE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "std {std_in:.1} -> {std_out:.2} cents (< {MAX_MONOTONIC_STD_CENTS}), smoothed std 0, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn vtlp_direction() -> Outcome {
    let cfg = frame_cfg();
    let fe = FrontendConfig::default();
    let x = VowelSpec::default().f0(120.0).duration(1.0).render();
    let start = Instant::now();
    let spec = stft(&x, &cfg).map_err(|e| e.to_string())?.magnitude();
    let designed = designed_formant_bins(&cfg);
    check(designed.len() == 3, || format!("{} designed peaks", designed.len()))?;

    let identity = vtlp_warp(&spec, &WarpFactor::new(1.0).unwrap(), &fe.warp).map_err(|e| e.to_string())?;
    let max_dev = spec
        .data
        .iter()
        .zip(identity.data.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(max_dev <= IDENTITY_TOL, || format!("alpha=1 deviates by {max_dev:e}"))?;

    let peaks_of = |s: &MagnitudeSpectrogram| local_maxima(&mean_log_envelope(s, 30));
    let base = peaks_of(&spec);
    let base_bins: Vec<usize> = designed
        .iter()
        .map(|&d| nearest(&base, d as f64).unwrap())
        .collect();
    let mut report = vec![format!("base {base_bins:?}")];
    for (alpha, down) in [(ALPHA_MIN, true), (ALPHA_MAX, false)] {
        let warped = vtlp_warp(&spec, &WarpFactor::new(alpha).unwrap(), &fe.warp).map_err(|e| e.to_string())?;
        let map = WarpMap::new(alpha, fe.warp.boundary_freq, cfg.nyquist()).map_err(|e| e.to_string())?;
        let peaks = peaks_of(&warped);
        let moved: Vec<usize> = base_bins
            .iter()
            .map(|&b| {
                let expected = cfg.hz_to_bin(map.forward(cfg.bin_hz(b as f64)));
                nearest(&peaks, expected).unwrap()
            })
            .collect();
        for (&b, &m) in base_bins.iter().zip(&moved) {
            let ok = if down { m < b } else { m > b };
            check(ok, || format!("alpha {alpha}: peak {b} -> {m}"))?;
        }
        report.push(format!("a={alpha} {moved:?}"));
    }
    let elapsed = start.elapsed();
    check(elapsed < VTLP_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{}, identity dev {max_dev:.1e}, {:.2}s", report.join(", "), elapsed.as_secs_f64()))
}

fn alpha_distribution() -> Outcome {
    let mut rng = stream_rng(2024, Stream::Alpha);
    let draws: Vec<f64> = (0..ALPHA_DRAWS).map(|_| sample_alpha(&mut rng, None).alpha).collect();
    let (min, max) = draws
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    check(min >= ALPHA_MIN && max <= ALPHA_MAX, || format!("range [{min}, {max}]"))?;
    check((ALPHA_MEAN_RANGE.0..=ALPHA_MEAN_RANGE.1).contains(&mean), || format!("mean {mean}"))?;
    let again = sample_alpha(&mut stream_rng(2024, Stream::Alpha), None).alpha;
    check(again == draws[0], || "same seed gave a different alpha".into())?;
    Ok(format!("{ALPHA_DRAWS} draws in [{min:.5}, {max:.5}], mean {mean:.5}"))
}

fn lifter_correctness() -> Outcome {
    let cfg = frame_cfg();
    let l = make_lifter(LIFTER_N_C, cfg.fft_size).map_err(|e| e.to_string())?;
    let expected = [1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0];
    check(l.weights[..7] == expected, || format!("weights {:?}", &l.weights[..7]))?;
    let n = cfg.fft_size;
    check(
        (1..n).all(|i| l.weights[i] == l.weights[n - i]),
        || "lifter is not symmetric".into(),
    )?;

    let fe = Frontend::new(FrontendConfig::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 1.0;
    for seed in 0..10u64 {
        let x = if seed % 2 == 0 {
            white_noise(0.25, cfg.sample_rate, 0.1, seed)
        } else {
            VowelSpec::default().f0(90.0 + 25.0 * seed as f64).duration(0.25).seed(seed).render()
        };
        let mag = stft(&x, &cfg).map_err(|e| e.to_string())?.magnitude();
        let t = (seed as usize * 7) % mag.num_frames();
        let frame = MagnitudeSpectrogram::new(
            mag.data.slice(ndarray::s![t..t + 1, ..]).to_owned(),
            mag.scale,
            cfg,
        )
        .map_err(|e| e.to_string())?;
        let env = fe.envelope(&frame).map_err(|e| e.to_string())?;
        let recep = real_cepstrum_of_magnitude(&env).map_err(|e| e.to_string())?;
        let share = quefrency_energy_ratio(&recep.data.row(0).to_vec(), LIFTER_N_C);
        worst = worst.min(share);
    }
    check(worst >= MIN_LOW_QUEFRENCY_SHARE, || format!("worst share {worst}"))?;
    Ok(format!("weights {:?}, worst low-quefrency share {worst:.6} over 10 frames", &l.weights[..5]))
}

fn envelope_discards_pitch() -> Outcome {
    let fe = Frontend::new(FrontendConfig::default()).map_err(|e| e.to_string())?;
    let vowel = |f0: f64| VowelSpec::default().f0(f0).duration(1.0).noise(0.1).seed(5).render();
    let (a, b) = (vowel(200.0), vowel(300.0));
    let s_r = |x: &Waveform| fe.build_rhythm_input(x, &mut stream_rng(77, Stream::Rhythm));
    let (ra, rb) = (s_r(&a).map_err(|e| e.to_string())?, s_r(&b).map_err(|e| e.to_string())?);
    check(ra.len() == rb.len(), || "rhythm inputs differ in length".into())?;
    let (mean_r, max_r) = framewise_rel_diff(&ra.data, &rb.data);
    let cfg = frame_cfg();
    let raw_a = stft(&a, &cfg).map_err(|e| e.to_string())?.magnitude();
    let raw_b = stft(&b, &cfg).map_err(|e| e.to_string())?.magnitude();
    let (mean_raw, _) = framewise_rel_diff(&raw_a.data, &raw_b.data);
    check(mean_r < MAX_RHYTHM_REL_DIFF, || format!("S_r differs by {mean_r:.3}"))?;
    check(mean_raw > MIN_RAW_REL_DIFF, || format!("raw spectrograms differ by only {mean_raw:.3}"))?;
    Ok(format!(
        "S_r framewise rel diff mean {mean_r:.3} (max {max_r:.3}), raw spectrogram {mean_raw:.3}"
    ))
}

fn resampling_contract() -> Outcome {
    let cfg = FrontendConfig {
        fixed_alpha: Some(1.0),
        resample: ResampleConfig::identity(),
        ..Default::default()
    };
    let fe = Frontend::new(cfg).map_err(|e| e.to_string())?;
    let x = VowelSpec::default().vibrato(30.0).duration(0.8).render();
    let s_c = fe
        .build_content_input(&x, &mut stream_rng(1, Stream::Content))
        .map_err(|e| e.to_string())?;
    let p = fe.perturb(&x, WarpFactor::new(1.0).unwrap()).map_err(|e| e.to_string())?;
    let mono_mel = fe.mel().project(&p.monotonic_spec).map_err(|e| e.to_string())?;
    check(s_c.data == mono_mel.data, || "unit config S_c differs from monotonic mel".into())?;

    let rc = ResampleConfig::default();
    let seq = FeatureSequence::new(mono_mel.data.clone(), FeatureKind::Mel).map_err(|e| e.to_string())?;
    let ident = random_resample(&seq, &mut stream_rng(3, Stream::Content), &ResampleConfig::identity())
        .map_err(|e| e.to_string())?;
    check(ident == seq, || "unit rate is not the identity".into())?;

    let bytes = |seed| {
        let out = random_resample(&seq, &mut stream_rng(seed, Stream::Content), &rc).unwrap();
        Tensor::from_array(&out.data).to_bytes()
    };
    check(bytes(9) == bytes(9), || "same seed, different bytes".into())?;

    let t = seq.len();
    let mut rng = stream_rng(11, Stream::Content);
    let total: usize = (0..RESAMPLE_RUNS)
        .map(|_| plan_segments(t, &mut rng, &rc).iter().map(|s| s.out_len).sum::<usize>())
        .sum();
    let ratio = total as f64 / (RESAMPLE_RUNS * t) as f64;
    check((ratio - 1.0).abs() <= LENGTH_TOL, || format!("mean length ratio {ratio}"))?;

    let onehot = Array2::from_shape_fn((t, 9), |(i, j)| if j == (i * 7) % 9 { 1.0 } else { 0.0 });
    let oh = FeatureSequence::new(onehot, FeatureKind::OneHot).map_err(|e| e.to_string())?;
    let out = random_resample(&oh, &mut stream_rng(12, Stream::Pitch), &rc).map_err(|e| e.to_string())?;
    check(
        out.data.rows().into_iter().all(|r| r.sum() == 1.0 && r.iter().all(|&v| v == 0.0 || v == 1.0)),
        || "invalid one-hot row after resampling".into(),
    )?;

    let ramp = FeatureSequence::new(Array2::from_shape_fn((t, 1), |(i, _)| i as f64), FeatureKind::Mel)
        .map_err(|e| e.to_string())?;
    let (r, pos) = random_resample_traced(&ramp, &mut stream_rng(13, Stream::Rhythm), &rc)
        .map_err(|e| e.to_string())?;
    let n_seg = pos.last().map_or(0, |p| p.segment + 1);
    let mut means = vec![(0.0, 0usize); n_seg];
    for (i, p) in pos.iter().enumerate() {
        means[p.segment].0 += r.data[[i, 0]];
        means[p.segment].1 += 1;
    }
    let means: Vec<f64> = means.iter().map(|(s, n)| s / *n as f64).collect();
    check(means.windows(2).all(|w| w[0] < w[1]), || "segment order changed".into())?;

    Ok(format!(
        "identity exact, seeded bytes equal, mean length ratio {ratio:.4} over {RESAMPLE_RUNS} runs, one-hot valid, {n_seg} segments in order"
    ))
}

fn joint_alignment() -> Outcome {
    let fe = Frontend::new(FrontendConfig::default()).map_err(|e| e.to_string())?;
    let x = VowelSpec::default().vibrato(40.0).syllables(2).duration(1.2).render();
    let p = fe.perturb(&x, WarpFactor::new(0.95).unwrap()).map_err(|e| e.to_string())?;
    let stats = compute_speaker_stats(std::slice::from_ref(&p.pitch), "s", &PitchConfig::default())
        .map_err(|e| e.to_string())?;
    let spec = fe.content_features(&p).map_err(|e| e.to_string())?;
    let onehot = fe.pitch_onehot(&p.pitch, &stats);
    let joint = build_pitch_converter_input(
        &spec,
        &onehot,
        &mut stream_rng(21, Stream::Converter),
        &fe.config.resample,
    )
    .map_err(|e| e.to_string())?;
    let d_spec = fe.config.n_mels;
    let n_bins = fe.config.pitch.n_bins;
    let width = joint.data.width();
    check(width == d_spec + n_bins + 1, || format!("width {width}"))?;
    check(joint.provenance.len() == joint.data.len(), || "missing provenance".into())?;

    let t = spec.len().min(onehot.num_frames());
    for (i, pos) in joint.provenance.iter().enumerate() {
        let row = joint.data.data.row(i);
        let hi = (pos.lower + 1).min(t - 1);
        for d in 0..d_spec {
            let expected = spec.data[[pos.lower, d]] * (1.0 - pos.frac) + spec.data[[hi, d]] * pos.frac;
            check((row[d] - expected).abs() <= 1e-9 * (1.0 + expected.abs()), || {
                format!("frame {i}: spectral part not from source {}", pos.position())
            })?;
        }
        let mix: Vec<f64> = (0..=n_bins)
            .map(|j| onehot.data[[pos.lower, j]] * (1.0 - pos.frac) + onehot.data[[hi, j]] * pos.frac)
            .collect();
        let best = mix
            .iter()
            .enumerate()
            .fold(0, |b, (j, &v)| if v > mix[b] { j } else { b });
        let col = (0..=n_bins).find(|&j| row[d_spec + j] == 1.0);
        check(col == Some(best), || {
            format!("frame {i}: pitch part {col:?} not from source {} ({best})", pos.position())
        })?;
    }

    let inputs = fe
        .build_all(&x, "s/u", "s", &BTreeMap::from([("s".to_string(), stats)]), 5)
        .map_err(|e| e.to_string())?;
    check(inputs.s_p.data.width() == d_spec + n_bins + 1, || "build_all width".into())?;
    Ok(format!(
        "{} frames share source positions, width {width} = {d_spec} + {n_bins} + 1",
        joint.data.len()
    ))
}

fn cepstral_algebra() -> Outcome {
    let cfg = frame_cfg();
    let x = VowelSpec::default().f0(180.0).duration(0.5).noise(0.05).render();
    let spec = stft(&x, &cfg).map_err(|e| e.to_string())?;
    let c: Cepstrum = real_cepstrum(&spec).map_err(|e| e.to_string())?;
    check(c.max_imag_residue < MAX_IMAG_RESIDUE, || format!("residue {:e}", c.max_imag_residue))?;
    let all_pass = Lifter {
        n_c: cfg.fft_size / 2,
        weights: vec![1.0; cfg.fft_size],
    };
    let env = envelope_from_cepstrum(&lifter_cepstrum(&c, &all_pass).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mag = spec.magnitude();
    let worst = mag
        .data
        .iter()
        .zip(env.data.iter())
        .filter(|(m, _)| **m > 1e-8)
        .map(|(m, e)| (m - e).abs() / m)
        .fold(0.0, f64::max);
    check(worst < ALLPASS_REL_TOL, || format!("relative error {worst:e}"))?;
    Ok(format!("all-pass recovery rel err {worst:.1e}, imaginary residue {:.1e}", c.max_imag_residue))
}

fn round_trips() -> Outcome {
    let cfg = VocoderConfig::default();
    let mut x = VowelSpec::default().vibrato(30.0).duration(1.0).render();
    let noise = white_noise(1.0, 16_000, 0.02, 4);
    for (a, b) in x.samples.iter_mut().zip(&noise.samples) {
        *a += b;
    }
    let y = istft(&stft(&x, &cfg.frame).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let sig: f64 = x.samples.iter().map(|v| v * v).sum();
    let err: f64 = x.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).powi(2)).sum();
    let snr = 10.0 * (sig / err.max(1e-300)).log10();
    check(snr > MIN_STFT_SNR_DB, || format!("STFT SNR {snr:.1} dB"))?;

    let f0 = 250.0;
    let v = VowelSpec::default().f0(f0).duration(1.0).render();
    let a = analyze(&v, &cfg).map_err(|e| e.to_string())?;
    let out = synthesize(&a.pitch, &a.aperiodicity, &a.envelope, &cfg).map_err(|e| e.to_string())?;
    let b = analyze(&out, &cfg).map_err(|e| e.to_string())?;
    let f_out = b.pitch.voiced_mean().ok_or("no voiced frames after resynthesis")?;
    check((f_out - f0).abs() / f0 <= F0_REL_TOL, || format!("F0 {f_out:.1} Hz"))?;

    let voiced: Vec<usize> = (0..b.num_frames()).filter(|&t| b.pitch.voiced[t]).collect();
    let k = b.envelope.env.ncols();
    let mean: Vec<f64> = (0..k)
        .map(|j| voiced.iter().map(|&t| b.envelope.env[[t, j]].ln()).sum::<f64>() / voiced.len() as f64)
        .collect();
    let peaks = local_maxima(&mean);
    let designed = designed_formant_bins(&cfg.frame);
    let mut found = Vec::new();
    for &d in &designed {
        let got = nearest(&peaks, d as f64).ok_or("no envelope peaks")?;
        check(got.abs_diff(d) <= FORMANT_BIN_TOL, || format!("formant bin {d} -> {got}"))?;
        found.push(got);
    }
    Ok(format!(
        "STFT SNR {snr:.1} dB, F0 {f_out:.1} Hz (target {f0}), formant bins {found:?} vs designed {designed:?}"
    ))
}

fn spf() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spf"));
    c.env_remove("SPF_SEED").env_remove("SPF_THREADS").env("RUST_LOG", "warn");
    c
}

fn run_ok(cmd: &mut Command) -> Result<std::process::Output, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{:?} exited with {}: {}",
            cmd.get_args().collect::<Vec<_>>(),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out)
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(bytes) = std::fs::read(&p) {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), bytes);
            }
        }
    }
    out
}

fn end_to_end() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = work.path().join("corpus");
    for (s, f0) in [("alice", 210.0), ("bob", 115.0)] {
        std::fs::create_dir_all(corpus.join(s)).map_err(|e| e.to_string())?;
        for u in 0..2 {
            let x = VowelSpec::default()
                .f0(f0 + 10.0 * u as f64)
                .vibrato(35.0)
                .syllables(u + 1)
                .duration(1.0)
                .noise(0.03)
                .seed(u as u64)
                .render();
            write_wav(&corpus.join(s).join(format!("take{u}.wav")), &x).map_err(|e| e.to_string())?;
        }
    }
    let manifest = work.path().join("manifest.json");
    run_ok(spf().arg("ingest").arg(&corpus).arg("--out").arg(&manifest))?;
    let (a, b) = (work.path().join("run_a"), work.path().join("run_b"));
    for dir in [&a, &b] {
        run_ok(spf().arg("inputs").arg(&manifest).arg("--out").arg(dir).args(["--seed", "1234"]))?;
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    check(!ta.is_empty() && ta == tb, || "output trees differ".into())?;
    let tensors = ta.keys().filter(|k| k.ends_with(".spf")).count();
    check(tensors == 4 * 5, || format!("{tensors} tensors"))?;

    let wav = work.path().join("fig.wav");
    let x = VowelSpec::default().vibrato(50.0).syllables(3).duration(1.5).noise(0.05).render();
    write_wav(&wav, &x).map_err(|e| e.to_string())?;
    let fig = work.path().join("fig2");
    run_ok(spf().arg("plot-fig2").arg(&wav).arg("--out").arg(&fig))?;
    let pngs = ["a_spectrogram", "b_monotonic", "c_perturbed", "d_envelope"]
        .iter()
        .filter(|n| fig.join(format!("{n}.png")).is_file())
        .count();
    check(pngs == 4, || format!("{pngs} panels"))?;
    let m: Fig2Metrics = serde_json::from_slice(
        &std::fs::read(fig.join("fig2_metrics.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    check(m.alpha == 0.95, || format!("figure alpha {}", m.alpha))?;
    check(m.harmonics_flattened, || format!("harmonics not flattened: {m:?}"))?;
    check(m.formants_lowered, || format!("formants not lowered: {m:?}"))?;
    check(m.envelope_smooth, || format!("envelope not smooth: {m:?}"))?;

    let report = work.path().join("probes.json");
    let start = Instant::now();
    run_ok(spf().args(["probes", "--synthetic", "--report"]).arg(&report))?;
    let elapsed = start.elapsed();
    let r: ProbeReport = serde_json::from_slice(&std::fs::read(&report).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    check(r.passed, || "probe report failed".into())?;
    check(elapsed < PROBE_BUDGET, || format!("probes took {elapsed:?}"))?;

    Ok(format!(
        "{} files identical across runs; fig2 std {:.1} -> {:.2} cents, centroid {:.0} -> {:.0} Hz, quefrency {:.4}; probes {:.1}s",
        ta.len(),
        m.f0_std_cents_original.unwrap_or(f64::NAN),
        m.f0_std_cents_monotonic.unwrap_or(f64::NAN),
        m.mean_centroid_hz_monotonic,
        m.mean_centroid_hz_perturbed,
        m.min_quefrency_ratio,
        elapsed.as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("pitch removal", pitch_removal),
        ("VTLP direction", vtlp_direction),
        ("alpha distribution", alpha_distribution),
        ("lifter correctness", lifter_correctness),
        ("envelope discards pitch", envelope_discards_pitch),
        ("random resampling contract", resampling_contract),
        ("joint spectrogram/pitch alignment", joint_alignment),
        ("cepstral algebra", cepstral_algebra),
        ("round trips", round_trips),
        ("end-to-end determinism and figure", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
