//! On-disk helpers for spectrograms and maps stored as single-level `AEP1` files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{export_embeddings, import_embeddings, FeatureMapPyramid};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor3};

/// Writes a T×F matrix as one `AEP1` level of shape T×F×1.
pub fn save_matrix<T: Scalar>(m: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let (r, c) = m.shape();
    let level = Tensor3::from_vec(r, c, 1, m.as_slice().to_vec())?;
    export_embeddings(&FeatureMapPyramid::from_levels(vec![level])?, path)
}

pub fn load_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let path = path.as_ref();
    let p = import_embeddings::<T>(path)?;
    let level = &p.levels[0];
    let (h, w, c) = level.shape();
    if p.levels.len() != 1 || c != 1 {
        return Err(Error::Shape(format!(
            "{}: expected one single-channel level, found {} levels with {c} channels",
            path.display(),
            p.levels.len()
        )));
    }
    Matrix::from_vec(h, w, level.as_slice().to_vec())
}

pub(crate) fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// File-name fragment for an SNR, e.g. `p6`, `m6`, `p0`, `m2.5`.
pub fn snr_tag(snr_db: f64) -> String {
    let sign = if snr_db < 0.0 { 'm' } else { 'p' };
    format!("{sign}{}", snr_db.abs())
}
