//! `AVDM` model files.
//!
//! Little-endian: magic `AVDM`, `u8` detector id, extractor section, detector
//! payload, trailing `u32` CRC32 over all preceding bytes. Numbers are `u32`
//! or `f32`; 64-bit seeds are split into low and high `u32` words.
//!
//! Extractor section: `u8` kind (0 reference, 1 imported), seed, `u32` block
//! count and per-block channels, `u32` selected count and per-level block
//! indices (0-based).

use std::fs;
use std::path::Path;

use super::padim::GaussianField;
use super::patchcore::MemoryBank;
use super::pipeline::{DetectorKind, Embedder, FittedModel};
use super::stfpm::{StfpmConfig, StudentModel};
use crate::error::{Error, Result};
use crate::features::conv::{ConvBlock, ConvNet};
use crate::features::{check_magic, level_name, verify_checksum, ExtractorKind, ExtractorSpec, ReferenceExtractor, Reader};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const AVDM_MAGIC: &[u8; 4] = b"AVDM";

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("model dimensions fit in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
        self.0.extend_from_slice(&((v >> 32) as u32).to_le_bytes());
    }

    fn f32(&mut self, v: f64) {
        self.0.extend_from_slice(&(v as f32).to_le_bytes());
    }

    fn f32s<T: Scalar>(&mut self, vs: &[T]) {
        for &v in vs {
            self.0.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
}

fn write_extractor(w: &mut Writer, spec: &ExtractorSpec) {
    w.u8(match spec.kind {
        ExtractorKind::Reference => 0,
        ExtractorKind::Imported => 1,
    });
    w.u64(spec.seed);
    w.u32(spec.channels_per_block.len());
    for &c in &spec.channels_per_block {
        w.u32(c);
    }
    w.u32(spec.selected_levels.len());
    for name in &spec.selected_levels {
        let idx = name
            .strip_prefix("block")
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(|n| n.checked_sub(1))
            .expect("level names are blockN");
        w.u32(idx);
    }
}

pub fn encode_model<T: Scalar>(model: &FittedModel<T>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(AVDM_MAGIC);
    w.u8(model.kind().id());
    write_extractor(&mut w, model.extractor());
    match model {
        FittedModel::Padim { field, .. } => {
            w.u32(field.height);
            w.u32(field.width);
            w.u32(field.channels);
            w.f32(field.epsilon.as_f64());
            w.f32s(&field.means);
            w.f32s(&field.precisions);
        }
        FittedModel::Patchcore { bank, .. } => {
            w.u32(bank.len());
            w.u32(bank.channels());
            w.u32(bank.source_count);
            w.f32(bank.coreset_fraction);
            w.f32s(bank.coreset.as_slice());
        }
        FittedModel::Stfpm(m) => {
            let c = &m.config;
            w.u32(c.steps);
            w.f32(c.lr);
            w.f32(c.momentum);
            w.u64(c.seed);
            w.u32(c.batch_size);
            w.u32(m.student.blocks.len());
            for b in &m.student.blocks {
                w.u32(b.in_channels);
                w.u32(b.out_channels);
                w.f32s(&b.weight);
                w.f32s(&b.bias);
            }
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

fn read_u64(r: &mut Reader<'_>, what: &str) -> Result<u64> {
    let lo = r.u32(what)? as u64;
    let hi = r.u32(what)? as u64;
    Ok(lo | (hi << 32))
}

/// Reads a count, rejecting values larger than the bytes left in the buffer.
fn read_len(r: &mut Reader<'_>, what: &str) -> Result<usize> {
    let at = r.offset();
    let n = r.u32(what)? as usize;
    if n > r.remaining() {
        return Err(Error::format(at, format!("{what} {n} exceeds the remaining {} bytes", r.remaining())));
    }
    Ok(n)
}

fn product(at: u64, dims: &[usize], what: &str) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(at, format!("{what}: dimensions {dims:?} overflow")))
}

fn read_extractor(r: &mut Reader<'_>) -> Result<ExtractorSpec> {
    let at = r.offset();
    let kind = match r.u8("extractor kind")? {
        0 => ExtractorKind::Reference,
        1 => ExtractorKind::Imported,
        k => return Err(Error::format(at, format!("unknown extractor kind {k}"))),
    };
    let seed = read_u64(r, "extractor seed")?;
    let n_blocks = read_len(r, "block count")?;
    let channels = (0..n_blocks)
        .map(|_| r.u32("block channels").map(|c| c as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_sel = read_len(r, "selected level count")?;
    let selected = (0..n_sel)
        .map(|_| r.u32("selected level").map(|i| level_name(i as usize)))
        .collect::<Result<Vec<_>>>()?;
    let spec = ExtractorSpec {
        kind,
        seed,
        channels_per_block: channels,
        selected_levels: selected,
    };
    spec.validate().map_err(|e| Error::format(at, e.to_string()))?;
    Ok(spec)
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<FittedModel<T>> {
    check_magic(bytes, AVDM_MAGIC)?;
    let mut r = Reader::new(bytes);
    r.take(4, "magic")?;
    let id = r.u8("detector id")?;
    let kind = DetectorKind::from_id(id).ok_or_else(|| Error::format(4, format!("unknown detector id {id}")))?;
    let spec = read_extractor(&mut r)?;
    let payload_at = r.offset();
    let model = match kind {
        DetectorKind::Padim => {
            let h = read_len(&mut r, "height")?;
            let w = read_len(&mut r, "width")?;
            let c = read_len(&mut r, "channels")?;
            let eps = r.f32("epsilon")?;
            let n_means = product(payload_at, &[h, w, c], "means")?;
            let n_prec = product(payload_at, &[h, w, c, c], "precisions")?;
            let means = r.f32s(n_means, "means")?;
            let precisions = r.f32s(n_prec, "precisions")?;
            FittedModel::Padim {
                embedder: Embedder::new(&spec)?,
                field: GaussianField {
                    height: h,
                    width: w,
                    channels: c,
                    epsilon: T::of(eps as f64),
                    means,
                    precisions,
                },
            }
        }
        DetectorKind::Patchcore => {
            let n = read_len(&mut r, "bank size")?;
            let c = read_len(&mut r, "channels")?;
            let source_count = r.u32("source count")? as usize;
            let fraction = r.f32("coreset fraction")? as f64;
            let rows = r.f32s(product(payload_at, &[n, c], "bank")?, "bank rows")?;
            FittedModel::Patchcore {
                embedder: Embedder::new(&spec)?,
                bank: MemoryBank {
                    coreset: Matrix::from_vec(n, c, rows)?,
                    coreset_fraction: fraction,
                    source_count,
                },
            }
        }
        DetectorKind::Stfpm => {
            let steps = r.u32("steps")? as usize;
            let lr = r.f32("learning rate")? as f64;
            let momentum = r.f32("momentum")? as f64;
            let seed = read_u64(&mut r, "student seed")?;
            let batch_size = r.u32("batch size")? as usize;
            let n_blocks = read_len(&mut r, "student block count")?;
            let mut blocks = Vec::with_capacity(n_blocks);
            for _ in 0..n_blocks {
                let at = r.offset();
                let ic = read_len(&mut r, "block inputs")?;
                let oc = read_len(&mut r, "block outputs")?;
                let weight = r.f32s(product(at, &[oc, ic, 9], "weights")?, "block weights")?;
                let bias = r.f32s(oc, "block bias")?;
                blocks.push(ConvBlock {
                    in_channels: ic,
                    out_channels: oc,
                    weight,
                    bias,
                });
            }
            let teacher = ReferenceExtractor::new(&spec).map_err(|e| Error::format(payload_at, e.to_string()))?;
            FittedModel::Stfpm(StudentModel {
                teacher,
                student: ConvNet { blocks },
                config: StfpmConfig {
                    steps,
                    lr,
                    momentum,
                    seed,
                    batch_size,
                },
                loss_history: Vec::new(),
            })
        }
    };
    verify_checksum(&mut r)?;
    Ok(model)
}

/// CRC32 stored in the trailer of an encoded model.
pub fn model_crc(bytes: &[u8]) -> Option<u32> {
    let tail = bytes.get(bytes.len().checked_sub(4)?..)?;
    Some(u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]))
}

pub fn save_model<T: Scalar>(model: &FittedModel<T>, path: impl AsRef<Path>) -> Result<u32> {
    let path = path.as_ref();
    let bytes = encode_model(model);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(model_crc(&bytes).expect("encoded model has a trailer"))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<FittedModel<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{Spectrogram, SpectrogramParams};
    use crate::detectors::DetectorConfig;

    fn spec(seed: u64) -> Spectrogram<f32> {
        let m = Matrix::from_fn(32, 16, |r, c| ((r * 5 + c * 11 + seed as usize) as f32 * 0.23).sin());
        Spectrogram::from_values(m, SpectrogramParams::default(), 16000).unwrap()
    }

    fn extractor() -> ExtractorSpec {
        ExtractorSpec {
            channels_per_block: vec![4, 6],
            selected_levels: vec![level_name(0), level_name(1)],
            ..ExtractorSpec::reference(0x1_0000_0003)
        }
    }

    fn fitted(kind: DetectorKind) -> FittedModel<f32> {
        let mut cfg = DetectorConfig::new(kind, extractor());
        cfg.stfpm.steps = 3;
        cfg.coreset_fraction = 0.3;
        cfg.fit(&[spec(0), spec(1), spec(2)]).unwrap()
    }

    #[test]
    fn round_trip_is_exact_in_f32() {
        for kind in DetectorKind::ALL {
            let mut m = fitted(kind);
            if let FittedModel::Stfpm(s) = &mut m {
                s.loss_history.clear();
            }
            let bytes = encode_model(&m);
            assert_eq!(&bytes[..4], b"AVDM");
            assert_eq!(bytes[4], kind.id());
            let back = decode_model::<f32>(&bytes).unwrap();
            // hyperparameters pass through f32, so compare bytes and behaviour
            assert_eq!(encode_model(&back), bytes, "{kind}");
            assert_eq!(back.patch_map(&spec(7)).unwrap(), m.patch_map(&spec(7)).unwrap());
        }
    }

    #[test]
    fn corruption_is_detected_with_offset() {
        let bytes = encode_model(&fitted(DetectorKind::Patchcore));
        let mut bad = bytes.clone();
        let last = bad.len() - 10;
        bad[last] ^= 0x40;
        match decode_model::<f32>(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len() - 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_model::<f32>(&bytes[..bytes.len() - 9]), Err(Error::Format { .. })));
        assert!(matches!(decode_model::<f32>(b"AEP1xxxx"), Err(Error::Format { offset: 0, .. })));
        let mut wrong_id = bytes;
        wrong_id[4] = 9;
        assert!(matches!(decode_model::<f32>(&wrong_id), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn file_round_trip_reports_crc() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.avdm");
        let m = fitted(DetectorKind::Padim);
        let crc = save_model(&m, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
        assert_eq!(encode_model(&load_model::<f32>(&path).unwrap()), bytes);
        fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(load_model::<f32>(&path), Err(Error::FileFormat { .. })));
    }
}
