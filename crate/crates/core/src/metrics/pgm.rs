//! Binary PGM (P5, maxval 255) images of masks, spectrograms and maps.
//!
//! Images put time on the horizontal axis and frequency on the vertical
//! axis with the lowest band at the bottom.

use std::fs;
use std::path::Path;

use super::masks::{BinaryMask, MaskRole};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
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
                return Err(Error::format(pos as u64, "truncated PGM header"));
            }
            fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
        }
        if fields[0].1 != "P5" {
            return Err(Error::format(0, "not a binary PGM (expected P5)"));
        }
        let num = |i: usize| {
            fields[i]
                .1
                .parse::<usize>()
                .map_err(|_| Error::format(fields[i].0 as u64, format!("bad PGM header field '{}'", fields[i].1)))
        };
        let (width, height, maxval) = (num(1)?, num(2)?, num(3)?);
        if maxval != 255 {
            return Err(Error::format(fields[3].0 as u64, format!("maxval {maxval} unsupported, need 255")));
        }
        pos += 1;
        let n = width * height;
        if bytes.len() < pos + n {
            return Err(Error::format(
                bytes.len() as u64,
                format!("truncated PGM: need {n} pixels, have {}", bytes.len().saturating_sub(pos)),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            pixels: bytes[pos..pos + n].to_vec(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.in_file(path))
    }

    /// Stacks images of equal width top to bottom, separated by `gap` white rows.
    pub fn stack(panels: &[GrayImage], gap: usize) -> Result<Self> {
        let width = panels.first().map_or(0, |p| p.width);
        if panels.iter().any(|p| p.width != width) {
            return Err(Error::Shape("panels differ in width".into()));
        }
        let mut pixels = Vec::new();
        for (i, p) in panels.iter().enumerate() {
            if i > 0 {
                pixels.extend(std::iter::repeat_n(255u8, gap * width));
            }
            pixels.extend_from_slice(&p.pixels);
        }
        let height = pixels.len().checked_div(width).unwrap_or(0);
        Ok(GrayImage { width, height, pixels })
    }
}

/// Pixel `(x, y)` shows cell `(t = x, f = F − 1 − y)`.
fn from_cells(rows: usize, cols: usize, cell: impl Fn(usize, usize) -> u8) -> GrayImage {
    let mut pixels = Vec::with_capacity(rows * cols);
    for y in 0..cols {
        for x in 0..rows {
            pixels.push(cell(x, cols - 1 - y));
        }
    }
    GrayImage {
        width: rows,
        height: cols,
        pixels,
    }
}

pub fn mask_image(mask: &BinaryMask) -> GrayImage {
    from_cells(mask.rows, mask.cols, |t, f| if mask.get(t, f) { 255 } else { 0 })
}

/// Any non-zero pixel counts as marked.
pub fn mask_from_image(img: &GrayImage, role: MaskRole) -> BinaryMask {
    let (rows, cols) = (img.width, img.height);
    let mut m = BinaryMask::empty(rows, cols, role);
    for y in 0..cols {
        for x in 0..rows {
            m.set(x, cols - 1 - y, img.pixels[y * rows + x] != 0);
        }
    }
    m
}

/// Min-max scaled to 0..=255; a constant matrix maps to 0.
pub fn matrix_image<T: Scalar>(m: &Matrix<T>) -> GrayImage {
    let vals = m.as_slice();
    let lo = vals.iter().copied().fold(T::infinity(), T::min);
    let hi = vals.iter().copied().fold(T::neg_infinity(), T::max);
    let range = (hi - lo).as_f64();
    let (rows, cols) = m.shape();
    from_cells(rows, cols, |t, f| {
        if range > 0.0 {
            ((m.get(t, f) - lo).as_f64() / range * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    })
}
