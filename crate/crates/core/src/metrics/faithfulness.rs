//! Score change after masking the input spectrogram with its own anomaly map.

use serde::{Deserialize, Serialize};

use crate::audio::Spectrogram;
use crate::detectors::AnomalyMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessResult {
    /// `f(x) − f(x ⊙ M)`
    pub ff_v1: f64,
    /// `f(x) − f(x ⊙ (1 − M) + bg ⊙ M)`
    pub ff_v2: f64,
}

/// Both masked inputs, element-wise on spectrogram values.
pub fn masked_inputs<T: Scalar>(
    x: &Spectrogram<T>,
    m: &AnomalyMap<T>,
    bg: &Spectrogram<T>,
) -> Result<(Spectrogram<T>, Spectrogram<T>)> {
    let shape = x.values.shape();
    if m.values.shape() != shape || bg.values.shape() != shape {
        return Err(Error::Shape(format!(
            "spectrogram {shape:?}, map {:?}, background {:?}",
            m.values.shape(),
            bg.values.shape()
        )));
    }
    let (rows, cols) = shape;
    let v1 = Matrix::from_fn(rows, cols, |r, c| x.values.get(r, c) * m.values.get(r, c));
    let v2 = Matrix::from_fn(rows, cols, |r, c| {
        let w = m.values.get(r, c);
        x.values.get(r, c) * (T::one() - w) + bg.values.get(r, c) * w
    });
    Ok((x.with_values(v1)?, x.with_values(v2)?))
}

pub fn faithfulness<T: Scalar>(
    f: impl Fn(&Spectrogram<T>) -> Result<T>,
    x: &Spectrogram<T>,
    m: &AnomalyMap<T>,
    bg: &Spectrogram<T>,
) -> Result<FaithfulnessResult> {
    let (x1, x2) = masked_inputs(x, m, bg)?;
    let fx = f(x)?.as_f64();
    let r = FaithfulnessResult {
        ff_v1: fx - f(&x1)?.as_f64(),
        ff_v2: fx - f(&x2)?.as_f64(),
    };
    if !r.ff_v1.is_finite() || !r.ff_v2.is_finite() {
        return Err(Error::Numerical(format!("non-finite faithfulness {r:?}")));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SpectrogramParams;

    fn spec(seed: f64) -> Spectrogram<f64> {
        let m = Matrix::from_fn(4, 3, |r, c| (r as f64 + 2.0 * c as f64 + seed).sin());
        Spectrogram::from_values(m, SpectrogramParams::default(), 16000).unwrap()
    }

    fn score(s: &Spectrogram<f64>) -> Result<f64> {
        Ok(s.values.as_slice().iter().map(|v| v * v).sum())
    }

    #[test]
    fn identity_masks() {
        let (x, bg) = (spec(0.0), spec(1.5));
        let ones = AnomalyMap::new(Matrix::filled(4, 3, 1.0));
        let zeros = AnomalyMap::new(Matrix::filled(4, 3, 0.0));
        assert_eq!(faithfulness(score, &x, &ones, &bg).unwrap().ff_v1, 0.0);
        let r = faithfulness(score, &x, &zeros, &bg).unwrap();
        assert_eq!(r.ff_v2, 0.0);
        assert_eq!(r.ff_v1, score(&x).unwrap());
    }

    #[test]
    fn full_mask_swaps_in_background_for_v2() {
        let (x, bg) = (spec(0.0), spec(1.5));
        let ones = AnomalyMap::new(Matrix::filled(4, 3, 1.0));
        let (_, x2) = masked_inputs(&x, &ones, &bg).unwrap();
        assert_eq!(x2.values, bg.values);
    }

    #[test]
    fn shape_mismatch() {
        let m = AnomalyMap::new(Matrix::filled(2, 3, 1.0));
        assert!(matches!(faithfulness(score, &spec(0.0), &m, &spec(1.0)), Err(Error::Shape(_))));
    }
}
