//! Spectrogram → multi-resolution patch embeddings.

mod aep;
pub mod conv;
mod extractor;
mod pyramid;

pub use aep::{decode_pyramid, encode_pyramid, export_embeddings, import_embeddings, AEP_MAGIC};
pub(crate) use aep::{check_magic, verify_checksum, Reader};
pub use extractor::{reference_extract, ExtractorKind, ExtractorSpec, ReferenceExtractor};
pub use pyramid::{align_and_concat, level_name, CellRect, CoordMap, FeatureMapPyramid, PatchGrid};
