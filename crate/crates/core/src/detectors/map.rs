use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CoordMap;
use crate::scalar::Scalar;
use crate::tensor::{gaussian_blur, resize_matrix, Matrix};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub detector: String,
    pub sample: String,
}

/// Per-cell anomaly scores, either at patch resolution or over the T×F plane.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap<T> {
    pub values: Matrix<T>,
    pub normalized: bool,
    pub provenance: Provenance,
}

impl<T: Scalar> AnomalyMap<T> {
    pub fn new(values: Matrix<T>) -> Self {
        AnomalyMap {
            values,
            normalized: false,
            provenance: Provenance::default(),
        }
    }

    pub fn with_provenance(mut self, detector: &str, sample: &str) -> Self {
        self.provenance = Provenance {
            detector: detector.to_string(),
            sample: sample.to_string(),
        };
        self
    }

    /// Min-max normalization to [0, 1]; a constant map becomes all zeros.
    pub fn normalized(&self) -> Self {
        let vals = self.values.as_slice();
        let (lo, hi) = vals.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (if v < lo { v } else { lo }, if v > hi { v } else { hi })
        });
        let range = hi - lo;
        let values = if vals.is_empty() || !(range > T::zero()) {
            self.values.map(|_| T::zero())
        } else {
            self.values.map(|v| ((v - lo) / range).min(T::one()).max(T::zero()))
        };
        AnomalyMap {
            values,
            normalized: true,
            provenance: self.provenance.clone(),
        }
    }
}

/// Bilinear upsample of a patch-resolution map onto the spectrogram plane,
/// then Gaussian smoothing (σ in cells, truncated at 4σ), then optional
/// min-max normalization.
pub fn postprocess<T: Scalar>(
    map: &AnomalyMap<T>,
    coord_map: &CoordMap,
    smoothing_sigma: f64,
    normalize: bool,
) -> Result<AnomalyMap<T>> {
    if map.values.shape() != coord_map.grid {
        return Err(Error::Shape(format!(
            "map is {:?} but coord map expects grid {:?}",
            map.values.shape(),
            coord_map.grid
        )));
    }
    let (t, f) = coord_map.source;
    if t == 0 || f == 0 {
        return Err(Error::Shape("coord map covers an empty plane".into()));
    }
    if !(smoothing_sigma >= 0.0) {
        return Err(Error::Parameter(format!("smoothing sigma must be >= 0, got {smoothing_sigma}")));
    }
    let up = resize_matrix(&map.values, t, f);
    let out = AnomalyMap {
        values: gaussian_blur(&up, smoothing_sigma),
        normalized: false,
        provenance: map.provenance.clone(),
    };
    Ok(if normalize { out.normalized() } else { out })
}

/// Map → single sample-level score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleReduction {
    #[default]
    Max,
    Mean,
    /// Mean of the k largest cells.
    TopK(usize),
}

impl fmt::Display for SampleReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleReduction::Max => f.write_str("max"),
            SampleReduction::Mean => f.write_str("mean"),
            SampleReduction::TopK(k) => write!(f, "top{k}"),
        }
    }
}

impl FromStr for SampleReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(SampleReduction::Max),
            "mean" => Ok(SampleReduction::Mean),
            _ => s
                .strip_prefix("top")
                .and_then(|k| k.parse().ok())
                .filter(|&k: &usize| k > 0)
                .map(SampleReduction::TopK)
                .ok_or_else(|| Error::Parameter(format!("unknown sample reduction '{s}'"))),
        }
    }
}

/// Maximum of the map.
pub fn sample_score<T: Scalar>(map: &AnomalyMap<T>) -> Result<T> {
    reduce_map(map, SampleReduction::Max)
}

pub fn reduce_map<T: Scalar>(map: &AnomalyMap<T>, how: SampleReduction) -> Result<T> {
    let vals = map.values.as_slice();
    if vals.is_empty() {
        return Err(Error::Shape("cannot score an empty map".into()));
    }
    Ok(match how {
        SampleReduction::Max => vals.iter().copied().fold(T::neg_infinity(), T::max),
        SampleReduction::Mean => vals.iter().copied().sum::<T>() / T::of_usize(vals.len()),
        SampleReduction::TopK(k) => {
            let mut v = vals.to_vec();
            v.sort_by(|a, b| b.partial_cmp(a).expect("finite map values"));
            let k = k.clamp(1, v.len());
            v[..k].iter().copied().sum::<T>() / T::of_usize(k)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gaussian_kernel;

    fn cm(t: usize, f: usize, h: usize, w: usize) -> CoordMap {
        CoordMap {
            source: (t, f),
            grid: (h, w),
        }
    }

    #[test]
    fn constant_map_stays_constant() {
        let m = AnomalyMap::new(Matrix::filled(4, 3, 0.7f64));
        let out = postprocess(&m, &cm(16, 12, 4, 3), 4.0, false).unwrap();
        assert_eq!(out.values.shape(), (16, 12));
        assert!(out.values.as_slice().iter().all(|&v| (v - 0.7).abs() < 1e-12));
        let n = postprocess(&m, &cm(16, 12, 4, 3), 4.0, true).unwrap();
        assert!(n.normalized && n.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_sigma_is_plain_resize() {
        let m = AnomalyMap::new(Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64));
        let out = postprocess(&m, &cm(3, 3, 3, 3), 0.0, false).unwrap();
        assert_eq!(out.values, m.values);
    }

    #[test]
    fn blurred_peak_drops_but_stays_put() {
        let mut v = Matrix::zeros(9, 9);
        v.set(4, 4, 1.0f64);
        let m = AnomalyMap::new(v.clone());
        let out = postprocess(&m, &cm(9, 9, 9, 9), 1.0, false).unwrap();

        // direct 2-D convolution oracle with clamp-to-edge borders
        let k = gaussian_kernel::<f64>(1.0);
        let r = (k.len() / 2) as isize;
        let oracle = Matrix::from_fn(9, 9, |i, j| {
            let mut acc = 0.0;
            for (a, ka) in k.iter().enumerate() {
                for (b, kb) in k.iter().enumerate() {
                    let ii = (i as isize + a as isize - r).clamp(0, 8) as usize;
                    let jj = (j as isize + b as isize - r).clamp(0, 8) as usize;
                    acc += ka * kb * v.get(ii, jj);
                }
            }
            acc
        });
        for (a, b) in out.values.as_slice().iter().zip(oracle.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let peak = out.values.get(4, 4);
        assert!(peak < 1.0);
        assert!(out.values.as_slice().iter().all(|&x| x <= peak));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = AnomalyMap::new(Matrix::filled(2, 2, 0.0f64));
        assert!(matches!(postprocess(&m, &cm(8, 8, 4, 4), 1.0, false), Err(Error::Shape(_))));
    }

    #[test]
    fn sample_score_cases() {
        assert_eq!(sample_score(&AnomalyMap::new(Matrix::filled(3, 3, 0.0f64))).unwrap(), 0.0);
        let mut v = Matrix::zeros(2, 3);
        v.set(1, 2, 3.7f64);
        v.set(0, 0, -1.0);
        assert_eq!(sample_score(&AnomalyMap::new(v.clone())).unwrap(), 3.7);
        // affine rescale moves the max identically
        let scaled = AnomalyMap::new(v.map(|x| 2.0 * x + 1.0));
        assert_eq!(sample_score(&scaled).unwrap(), 2.0 * 3.7 + 1.0);
        let empty = AnomalyMap::new(Matrix::<f64>::zeros(0, 0));
        assert!(matches!(sample_score(&empty), Err(Error::Shape(_))));
    }

    #[test]
    fn reductions() {
        let v = Matrix::from_vec(1, 4, vec![1.0f64, 4.0, 2.0, 3.0]).unwrap();
        let m = AnomalyMap::new(v);
        assert_eq!(reduce_map(&m, SampleReduction::Mean).unwrap(), 2.5);
        assert_eq!(reduce_map(&m, SampleReduction::TopK(2)).unwrap(), 3.5);
        assert_eq!("top3".parse::<SampleReduction>().unwrap(), SampleReduction::TopK(3));
        assert!("top0".parse::<SampleReduction>().is_err());
    }

    #[test]
    fn normalization_bounds() {
        let m = AnomalyMap::new(Matrix::from_vec(1, 3, vec![2.0f64, 4.0, 3.0]).unwrap()).normalized();
        assert_eq!(m.values.as_slice(), &[0.0, 1.0, 0.5]);
    }
}
