//! `AEP1` embedding container.
//!
//! Little-endian layout: magic `AEP1`; `u32` level count; per level `u32` H,
//! `u32` W, `u32` C followed by H·W·C `f32` values (h, then w, then c
//! fastest); trailing `u32` CRC32 over every preceding byte.

use std::fs;
use std::path::Path;

use super::pyramid::FeatureMapPyramid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

pub const AEP_MAGIC: &[u8; 4] = b"AEP1";

pub fn encode_pyramid<T: Scalar>(p: &FeatureMapPyramid<T>) -> Vec<u8> {
    let payload: usize = p.levels.iter().map(|l| 12 + 4 * l.as_slice().len()).sum();
    let mut buf = Vec::with_capacity(8 + payload + 4);
    buf.extend_from_slice(AEP_MAGIC);
    buf.extend_from_slice(&(p.levels.len() as u32).to_le_bytes());
    for level in &p.levels {
        let (h, w, c) = level.shape();
        for d in [h, w, c] {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in level.as_slice() {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Little-endian cursor that reports the byte offset of any failure.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.offset(),
                format!("truncated: need {n} bytes for {what}, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_bits(self.u32(what)?))
    }

    pub(crate) fn f32s<T: Scalar>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.offset(), format!("{what}: element count overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect())
    }
}

/// Reads the trailing CRC32 and checks it covers exactly the bytes consumed so far.
pub(crate) fn verify_checksum(r: &mut Reader<'_>) -> Result<()> {
    let crc_at = r.offset();
    let stored = r.u32("checksum")?;
    if r.remaining() != 0 {
        return Err(Error::format(r.offset(), format!("{} trailing bytes", r.remaining())));
    }
    let computed = crc32fast::hash(&r.bytes[..crc_at as usize]);
    if stored != computed {
        return Err(Error::format(
            crc_at,
            format!("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"),
        ));
    }
    Ok(())
}

pub(crate) fn check_magic(bytes: &[u8], magic: &[u8; 4]) -> Result<()> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::format(
            0,
            format!("bad magic: expected {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    Ok(())
}

pub fn decode_pyramid<T: Scalar>(bytes: &[u8]) -> Result<FeatureMapPyramid<T>> {
    // Structure is parsed before the CRC so truncation is reported as such.
    check_magic(bytes, AEP_MAGIC)?;
    let mut r = Reader::new(bytes);
    r.take(4, "magic")?;
    let n_levels = r.u32("level count")? as usize;
    if n_levels == 0 {
        return Err(Error::format(4, "pyramid declares zero levels"));
    }
    let mut levels = Vec::with_capacity(n_levels.min(64));
    for i in 0..n_levels {
        let at = r.offset();
        let h = r.u32("level height")? as usize;
        let w = r.u32("level width")? as usize;
        let c = r.u32("level channels")? as usize;
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .filter(|&n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::format(at, format!("level {i}: dimensions {h}x{w}x{c} overflow")))?;
        if n * 4 > r.remaining() {
            return Err(Error::format(
                r.offset(),
                format!(
                    "truncated: level {i} of {n_levels} declares {h}x{w}x{c} but only {} bytes remain",
                    r.remaining()
                ),
            ));
        }
        let data = r.f32s::<T>(n, "level data")?;
        levels.push(Tensor3::from_vec(h, w, c, data)?);
    }
    verify_checksum(&mut r)?;
    FeatureMapPyramid::from_levels(levels).map_err(|e| Error::format(4, e.to_string()))
}

pub fn export_embeddings<T: Scalar>(p: &FeatureMapPyramid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pyramid(p)).map_err(|e| Error::io(path, e))
}

/// Reads an `AEP1` file. Levels are named `block1..blockN` and the source
/// shape defaults to the first level's resolution.
pub fn import_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMapPyramid<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pyramid(&bytes).map_err(|e| e.in_file(path))
}
