//! Descriptor tensors and the `DDT1` binary container.
//!
//! Layout (little-endian):
//! - magic: `b"DDT1"`
//! - h, w, d: u32 each
//! - data: f32 * h * w * d, row-major cells with the channel innermost,
//!   i.e. element `(i, j, c)` sits at `(i * w + j) * d + c`.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"DDT1";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("bad magic {0:?}, expected \"DDT1\"")]
    BadMagic([u8; 4]),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: u64 },
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },
    #[error("invalid dimensions {h}x{w}x{d}")]
    DimOverflow { h: u64, w: u64, d: u64 },
    #[error("payload length {len} does not match {h}x{w}x{d}")]
    LengthMismatch { len: usize, h: usize, w: usize, d: usize },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// The `h x w x d` activation field of one image from one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorTensor {
    h: usize,
    w: usize,
    d: usize,
    data: Vec<f32>,
}

fn checked_len(h: u64, w: u64, d: u64) -> Result<usize, DescriptorError> {
    let overflow = DescriptorError::DimOverflow { h, w, d };
    if h == 0 || w == 0 || d == 0 || h > u64::from(u32::MAX) || w > u64::from(u32::MAX) || d > u64::from(u32::MAX) {
        return Err(overflow);
    }
    h.checked_mul(w)
        .and_then(|n| n.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .and_then(|bytes| usize::try_from(bytes).ok())
        .map(|bytes| bytes / 4)
        .ok_or(overflow)
}

impl DescriptorTensor {
    pub fn new(h: usize, w: usize, d: usize, data: Vec<f32>) -> Result<Self, DescriptorError> {
        let len = checked_len(h as u64, w as u64, d as u64)?;
        if data.len() != len {
            return Err(DescriptorError::LengthMismatch { len: data.len(), h, w, d });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(DescriptorError::NonFiniteValue { index });
        }
        Ok(Self { h, w, d, data })
    }

    pub fn zeros(h: usize, w: usize, d: usize) -> Result<Self, DescriptorError> {
        let len = checked_len(h as u64, w as u64, d as u64)?;
        Ok(Self { h, w, d, data: vec![0.0; len] })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn cell_count(&self) -> usize {
        self.h * self.w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Descriptor at row `i`, column `j`.
    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.w + j) * self.d;
        &self.data[start..start + self.d]
    }

    /// Descriptors in row-major cell order.
    pub fn cells(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.d)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&MAGIC);
        for dim in [self.h, self.w, self.d] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DescriptorError> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(DescriptorError::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(DescriptorError::TruncatedFile { expected: HEADER_LEN as u64, found: bytes.len() as u64 });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(DescriptorError::BadMagic(magic));
        }
        let dim = |k: usize| u64::from(u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()));
        let (h, w, d) = (dim(0), dim(1), dim(2));
        let len = checked_len(h, w, d)?;
        let payload = &bytes[HEADER_LEN..];
        let expected = len as u64 * 4;
        let found = payload.len() as u64;
        if found < expected {
            return Err(DescriptorError::TruncatedFile {
                expected: expected + HEADER_LEN as u64,
                found: found + HEADER_LEN as u64,
            });
        }
        if found > expected {
            return Err(DescriptorError::TrailingBytes { extra: found - expected });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(h as usize, w as usize, d as usize, data)
    }
}

pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<DescriptorTensor, DescriptorError> {
    let bytes = fs::read(path)?;
    DescriptorTensor::decode(&bytes)
}

pub fn write_descriptor_file(t: &DescriptorTensor, path: impl AsRef<Path>) -> Result<(), DescriptorError> {
    fs::write(path, t.encode())?;
    Ok(())
}
