//! Signal-processing front end that turns speech into four
//! information-constrained feature streams: a content input with flattened
//! pitch and warped timbre, a rhythm input reduced to a coarse cepstral
//! envelope, a one-hot pitch contour, and a joint spectrogram/pitch input
//! for pitch conversion.

pub mod dsp;
pub mod error;
pub mod par;
pub mod perturb;
pub mod pipeline;
pub mod pitch;
pub mod resample;
pub mod synthetic;
pub mod vocoder;

pub use error::{Error, Result};
