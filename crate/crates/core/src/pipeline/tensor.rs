//! Binary tensor files: `SPF0`, u16 version, u16 rank, rank × u64 dims, then
//! row-major f32 data, everything little-endian.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPF0";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_array(a: &Array2<f64>) -> Self {
        Self {
            dims: vec![a.nrows(), a.ncols()],
            data: a.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f32>> {
        match self.dims[..] {
            [r, c] => Array2::from_shape_vec((r, c), self.data.clone())
                .map_err(|e| Error::InvalidInput(e.to_string())),
            _ => Err(Error::InvalidInput(format!("expected rank 2, found {}", self.dims.len()))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u16).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("tensor: {msg}"));
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad("missing SPF0 magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let rank = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let body = 8 + 8 * rank;
        if bytes.len() < body {
            return Err(bad("truncated header"));
        }
        let dims: Vec<usize> = bytes[8..body]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("dimension overflow"))?;
        if bytes.len() != body + 4 * count {
            return Err(bad(&format!(
                "expected {} data bytes, found {}",
                4 * count,
                bytes.len() - body
            )));
        }
        let data = bytes[body..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Writes `bytes` next to `path` and renames it into place, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
