//! WAV intake and output: 16-bit PCM mono, resampled to the configured rate.

use std::path::Path;

use rubato::audioadapter::Adapter;
use rubato::audioadapter_buffers::direct::SequentialSliceOfVecs;
use rubato::{
    Async, FixedAsync, Resampler, SincInterpolationParameters, SincInterpolationType,
    WindowFunction,
};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Header facts needed to accept or reject a file without decoding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    pub num_samples: u32,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate as f64
    }

    /// Reason this file cannot be ingested, if any.
    pub fn rejection(&self) -> Option<String> {
        if self.channels != 1 {
            Some(format!("{} channels, expected mono", self.channels))
        } else if self.bits_per_sample != 16 {
            Some(format!("{}-bit samples, expected 16-bit PCM", self.bits_per_sample))
        } else if self.num_samples == 0 {
            Some("no samples".to_string())
        } else {
            None
        }
    }
}

pub fn wav_info(path: &Path) -> Result<WavInfo> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::InvalidInput(format!(
            "{}: floating-point samples, expected 16-bit PCM",
            path.display()
        )));
    }
    Ok(WavInfo {
        sample_rate: spec.sample_rate,
        channels: spec.channels,
        bits_per_sample: spec.bits_per_sample,
        num_samples: reader.duration(),
    })
}

/// Reads a 16-bit mono WAV and resamples it to `target_rate`.
pub fn read_wav(path: &Path, target_rate: u32) -> Result<Waveform> {
    let info = wav_info(path)?;
    if let Some(reason) = info.rejection() {
        return Err(Error::InvalidInput(format!("{}: {reason}", path.display())));
    }
    let mut reader = hound::WavReader::open(path)?;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let x = Waveform::new(samples, info.sample_rate);
    if info.sample_rate == target_rate {
        Ok(x)
    } else {
        resample(&x, target_rate)
    }
}

/// Writes 16-bit mono PCM, clipping to [-1, 1).
pub fn write_wav(path: &Path, x: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: x.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &v in &x.samples {
        w.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Band-limited windowed-sinc sample rate conversion of a whole clip.
pub fn resample(x: &Waveform, target_rate: u32) -> Result<Waveform> {
    if x.sample_rate == target_rate || x.is_empty() {
        return Ok(Waveform::new(x.samples.clone(), target_rate));
    }
    let ratio = target_rate as f64 / x.sample_rate as f64;
    let params = SincInterpolationParameters {
        sinc_len: 128,
        f_cutoff: Some(0.925),
        interpolation: SincInterpolationType::Cubic,
        oversampling_factor: 128,
        window: WindowFunction::BlackmanHarris2,
    };
    let resampler_err = |e: &dyn std::fmt::Display| Error::InvalidInput(format!("resampler: {e}"));
    let mut r = Async::<f64>::new_sinc(ratio, 1.0, &params, 1024, 1, FixedAsync::Input)
        .map_err(|e| resampler_err(&e))?;
    let input = [x.samples.clone()];
    let adapter =
        SequentialSliceOfVecs::new(&input[..], 1, x.len()).map_err(|e| resampler_err(&e))?;
    let out = r
        .process_all(&adapter, x.len(), None)
        .map_err(|e| resampler_err(&e))?;
    let expected = (x.len() as f64 * ratio).round() as usize;
    let samples = (0..expected.min(out.frames()))
        .map(|i| out.read_sample(0, i).unwrap_or(0.0))
        .collect();
    Ok(Waveform::new(samples, target_rate))
}
