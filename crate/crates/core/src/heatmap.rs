//! Grayscale heatmaps of normalized indicator maps, written as binary PGM.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::localize::resize_nearest;
use crate::transform::{normalize_signed, IndicatorMap};

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PGM: {0}")]
    Malformed(&'static str),
}

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Maps `[-1, 1]` onto `0..=255` with round-half-up, so 0 lands on 128.
pub fn quantize(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0 + 0.5).floor() as u8
}

/// Inverse of [`quantize`] up to one quantization step.
pub fn dequantize(p: u8) -> f64 {
    f64::from(p) / 255.0 * 2.0 - 1.0
}

/// Normalizes `m` into `[-1, 1]`, resizes it to `height x width` and quantizes.
pub fn render(m: &IndicatorMap, height: usize, width: usize) -> GrayImage {
    let resized = resize_nearest(&normalize_signed(m), height, width);
    GrayImage { width, height, pixels: resized.values.iter().map(|&v| quantize(v)).collect() }
}

impl GrayImage {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, PgmError> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(PgmError::Malformed("truncated header"));
            }
            fields.push(&bytes[start..pos]);
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != b"P5" {
            return Err(PgmError::Malformed("not a binary PGM"));
        }
        let num = |f: &[u8]| -> Result<usize, PgmError> {
            std::str::from_utf8(f).ok().and_then(|s| s.parse().ok()).ok_or(PgmError::Malformed("bad header number"))
        };
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(PgmError::Malformed("only maxval 255 is supported"));
        }
        let pixels = bytes.get(pos..).filter(|p| p.len() == width * height).ok_or(PgmError::Malformed("raster size"))?;
        Ok(Self { width, height, pixels: pixels.to_vec() })
    }
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), PgmError> {
    fs::write(path, img.to_pgm())?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, PgmError> {
    GrayImage::from_pgm(&fs::read(path)?)
}
