//! Random segment-wise resampling along time.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    /// Inclusive segment length range in frames.
    pub seg_len_range: (usize, usize),
    /// Inclusive range of output/input length ratios.
    pub rate_range: (f64, f64),
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            seg_len_range: (19, 32),
            rate_range: (0.5, 1.5),
        }
    }
}

impl ResampleConfig {
    pub fn identity() -> Self {
        Self {
            rate_range: (1.0, 1.0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.seg_len_range;
        let (r0, r1) = self.rate_range;
        if !(1 <= lo && lo <= hi) {
            return Err(Error::Config(format!("bad segment length range {lo}..={hi}")));
        }
        if !(0.0 < r0 && r0 <= r1 && r1.is_finite()) {
            return Err(Error::Config(format!("bad rate range {r0}..={r1}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mel,
    Envelope,
    OneHot,
    /// Real-valued columns followed by a one-hot block starting at `onehot_from`.
    Concat { onehot_from: usize },
}

impl FeatureKind {
    fn onehot_columns(self, width: usize) -> Option<std::ops::Range<usize>> {
        match self {
            FeatureKind::OneHot => Some(0..width),
            FeatureKind::Concat { onehot_from } => Some(onehot_from..width),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::Envelope => "envelope",
            FeatureKind::OneHot => "onehot",
            FeatureKind::Concat { .. } => "concat",
        }
    }
}

/// T x D feature matrix with a kind tag.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub data: Array2<f64>,
    pub kind: FeatureKind,
}

fn is_onehot(row: ArrayView1<'_, f64>) -> bool {
    let ones = row.iter().filter(|&&v| v == 1.0).count();
    ones == 1 && row.iter().all(|&v| v == 0.0 || v == 1.0)
}

impl FeatureSequence {
    pub fn new(data: Array2<f64>, kind: FeatureKind) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidInput("feature sequence has no frames".into()));
        }
        if let Some(cols) = kind.onehot_columns(data.ncols()) {
            if cols.is_empty() {
                return Err(Error::InvalidInput("one-hot block is empty".into()));
            }
            if data
                .rows()
                .into_iter()
                .any(|r| !is_onehot(r.slice(ndarray::s![cols.clone()])))
            {
                return Err(Error::InvalidInput("row is not one-hot".into()));
            }
        }
        Ok(Self { data, kind })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }
}

/// Fractional input frame an output frame was interpolated from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePos {
    pub lower: usize,
    pub frac: f64,
    pub segment: usize,
}

impl SourcePos {
    pub fn position(&self) -> f64 {
        self.lower as f64 + self.frac
    }
}

/// One segment of the resampling plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub rate: f64,
    pub out_len: usize,
}

/// Draws the segmentation and per-segment rates for a sequence of length `t`.
pub fn plan_segments<R: Rng + ?Sized>(t: usize, rng: &mut R, cfg: &ResampleConfig) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut start = 0;
    while start < t {
        let len = rng
            .random_range(cfg.seg_len_range.0..=cfg.seg_len_range.1)
            .min(t - start);
        let rate = rng.random_range(cfg.rate_range.0..=cfg.rate_range.1);
        let out_len = ((len as f64 * rate).round() as usize).max(1);
        segments.push(Segment {
            start,
            len,
            rate,
            out_len,
        });
        start += len;
    }
    segments
}

/// Source positions for every output frame of a plan. Each segment's first
/// and last output frames land on its first and last input frames.
pub fn source_positions(segments: &[Segment]) -> Vec<SourcePos> {
    let mut out = Vec::new();
    for (s_idx, s) in segments.iter().enumerate() {
        for j in 0..s.out_len {
            let offset = if s.len == 1 {
                0.0
            } else if s.out_len == 1 {
                (s.len - 1) as f64 / 2.0
            } else {
                (j * (s.len - 1)) as f64 / (s.out_len - 1) as f64
            };
            let lower = offset.floor() as usize;
            out.push(SourcePos {
                lower: s.start + lower,
                frac: offset - lower as f64,
                segment: s_idx,
            });
        }
    }
    out
}

/// Linear interpolation of rows at the given positions, with one-hot columns
/// re-projected by argmax (ties go to the lower column).
pub fn gather(seq: &FeatureSequence, positions: &[SourcePos]) -> Result<FeatureSequence> {
    let t = seq.len();
    let d = seq.width();
    let mut data = Array2::zeros((positions.len(), d));
    for (mut row, p) in data.rows_mut().into_iter().zip(positions) {
        let a = seq.data.row(p.lower);
        if p.frac == 0.0 || p.lower + 1 >= t {
            row.assign(&a);
        } else {
            let b = seq.data.row(p.lower + 1);
            for ((o, &x), &y) in row.iter_mut().zip(a.iter()).zip(b.iter()) {
                *o = x * (1.0 - p.frac) + y * p.frac;
            }
        }
        if let Some(cols) = seq.kind.onehot_columns(d) {
            let mut best = cols.start;
            for c in cols.clone() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            for c in cols {
                row[c] = if c == best { 1.0 } else { 0.0 };
            }
        }
    }
    FeatureSequence::new(data, seq.kind)
}

/// [`random_resample`] that also returns the source position of every
/// output frame.
pub fn random_resample_traced<R: Rng + ?Sized>(
    seq: &FeatureSequence,
    rng: &mut R,
    cfg: &ResampleConfig,
) -> Result<(FeatureSequence, Vec<SourcePos>)> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::InvalidInput("cannot resample an empty sequence".into()));
    }
    let segments = plan_segments(seq.len(), rng, cfg);
    let positions = source_positions(&segments);
    Ok((gather(seq, &positions)?, positions))
}

/// Splits the sequence into random-length contiguous segments and stretches
/// each by an independent random rate, keeping segment order.
pub fn random_resample<R: Rng + ?Sized>(
    seq: &FeatureSequence,
    rng: &mut R,
    cfg: &ResampleConfig,
) -> Result<FeatureSequence> {
    random_resample_traced(seq, rng, cfg).map(|(s, _)| s)
}
