//! Per-position multivariate Gaussian model scored by Mahalanobis distance.

use rayon::prelude::*;

use super::map::AnomalyMap;
use crate::error::{Error, Result};
use crate::features::PatchGrid;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub epsilon: T,
    /// H·W means of length C, position-major.
    pub means: Vec<T>,
    /// H·W precision matrices (C×C, row-major), position-major.
    pub precisions: Vec<T>,
}

impl<T: Scalar> GaussianField<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn mean(&self, h: usize, w: usize) -> &[T] {
        let c = self.channels;
        let i = h * self.width + w;
        &self.means[i * c..(i + 1) * c]
    }

    pub fn precision(&self, h: usize, w: usize) -> Matrix<T> {
        let c = self.channels;
        let i = h * self.width + w;
        Matrix::from_vec(c, c, self.precisions[i * c * c..(i + 1) * c * c].to_vec())
            .expect("precision block has C*C entries")
    }

    fn precision_slice(&self, i: usize) -> &[T] {
        let cc = self.channels * self.channels;
        &self.precisions[i * cc..(i + 1) * cc]
    }
}

/// Lower Cholesky factor of a symmetric matrix, or `None` if it is not positive definite.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let l = cholesky(a)?;
    // L^{-1} by forward substitution, column by column
    let mut linv = Matrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in col..i {
                s -= l.get(i, k) * linv.get(k, col);
            }
            linv.set(i, col, s / l.get(i, i));
        }
    }
    // A^{-1} = L^{-T} L^{-1}
    let mut inv = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = T::zero();
            for k in i..n {
                s += linv.get(k, i) * linv.get(k, j);
            }
            inv.set(i, j, s);
            inv.set(j, i, s);
        }
    }
    Some(inv)
}

/// Fits one Gaussian per grid position: sample mean, sample covariance with
/// an n−1 denominator plus ε·I, and its inverse.
pub fn padim_fit<T: Scalar>(train_grids: &[PatchGrid<T>], epsilon: f64) -> Result<GaussianField<T>> {
    if train_grids.len() < 2 {
        return Err(Error::Statistics(format!(
            "need at least 2 training grids for a covariance, got {}",
            train_grids.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let (h, w, c) = train_grids[0].dims();
    if let Some(g) = train_grids.iter().find(|g| g.dims() != (h, w, c)) {
        return Err(Error::Shape(format!(
            "training grids differ: {:?} vs {:?}",
            (h, w, c),
            g.dims()
        )));
    }
    let n = train_grids.len();
    let eps = T::of(epsilon);
    let inv_n = T::one() / T::of_usize(n);
    let inv_n1 = T::one() / T::of_usize(n - 1);

    let per_position: Vec<Result<(Vec<T>, Vec<T>)>> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let mut mean = vec![T::zero(); c];
            for g in train_grids {
                for (m, &v) in mean.iter_mut().zip(g.grid.vector(y, x)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv_n);

            let mut cov = Matrix::zeros(c, c);
            let mut d = vec![T::zero(); c];
            for g in train_grids {
                for ((dv, &v), &m) in d.iter_mut().zip(g.grid.vector(y, x)).zip(&mean) {
                    *dv = v - m;
                }
                for a in 0..c {
                    let row = cov.row_mut(a);
                    let da = d[a];
                    for b in 0..=a {
                        row[b] += da * d[b];
                    }
                }
            }
            for a in 0..c {
                for b in 0..=a {
                    let v = cov.get(a, b) * inv_n1 + if a == b { eps } else { T::zero() };
                    cov.set(a, b, v);
                    cov.set(b, a, v);
                }
            }
            let precision = spd_inverse(&cov).ok_or_else(|| {
                Error::Numerical(format!("covariance at position ({y}, {x}) is not positive definite"))
            })?;
            Ok((mean, precision.into_vec()))
        })
        .collect();

    let mut means = Vec::with_capacity(h * w * c);
    let mut precisions = Vec::with_capacity(h * w * c * c);
    for r in per_position {
        let (m, p) = r?;
        means.extend(m);
        precisions.extend(p);
    }
    Ok(GaussianField {
        height: h,
        width: w,
        channels: c,
        epsilon: eps,
        means,
        precisions,
    })
}

/// `sqrt((x − μ)ᵀ P (x − μ))` at every position.
pub fn padim_score<T: Scalar>(grid: &PatchGrid<T>, field: &GaussianField<T>) -> Result<AnomalyMap<T>> {
    if grid.dims() != field.dims() {
        return Err(Error::Shape(format!(
            "grid {:?} does not match fitted field {:?}",
            grid.dims(),
            field.dims()
        )));
    }
    let (h, w, c) = field.dims();
    let scores: Vec<T> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let x = grid.grid.vector(i / w, i % w);
            let mu = &field.means[i * c..(i + 1) * c];
            let d: Vec<T> = x.iter().zip(mu).map(|(&a, &b)| a - b).collect();
            let p = field.precision_slice(i);
            let mut q = T::zero();
            for a in 0..c {
                let row = &p[a * c..(a + 1) * c];
                let mut s = T::zero();
                for (&pv, &dv) in row.iter().zip(&d) {
                    s += pv * dv;
                }
                q += d[a] * s;
            }
            q.max(T::zero()).sqrt()
        })
        .collect();
    Ok(AnomalyMap::new(Matrix::from_vec(h, w, scores)?))
}
