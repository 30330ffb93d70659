//! Memory bank of training patches, subsampled by greedy k-center selection,
//! scored by exact nearest-neighbour distance.

use rayon::prelude::*;

use super::map::AnomalyMap;
use crate::error::{Error, Result};
use crate::features::PatchGrid;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const DEFAULT_CORESET_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank<T> {
    /// N×C stored embeddings.
    pub coreset: Matrix<T>,
    pub coreset_fraction: f64,
    pub source_count: usize,
}

impl<T: Scalar> MemoryBank<T> {
    pub fn len(&self) -> usize {
        self.coreset.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coreset.rows() == 0
    }

    pub fn channels(&self) -> usize {
        self.coreset.cols()
    }
}

/// Bank size for a pool: `max(1, round(fraction · n))`.
pub fn coreset_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.max(1))
}

#[inline]
pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Farthest-point selection over the rows of `pool`, starting from row 0.
/// Ties go to the lowest index. Returns selected row indices in pick order.
pub fn greedy_k_center<T: Scalar>(pool: &Matrix<T>, n: usize) -> Vec<usize> {
    let rows = pool.rows();
    if rows == 0 || n == 0 {
        return Vec::new();
    }
    let n = n.min(rows);
    let mut selected = Vec::with_capacity(n);
    selected.push(0);
    let first = pool.row(0);
    let mut nearest: Vec<T> = (0..rows).into_par_iter().map(|i| sq_dist(pool.row(i), first)).collect();
    // selected rows can never win again, even when every remaining distance is zero
    nearest[0] = T::neg_infinity();
    while selected.len() < n {
        let mut best = 0;
        let mut best_d = T::neg_infinity();
        for (i, &d) in nearest.iter().enumerate() {
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        selected.push(best);
        nearest[best] = T::neg_infinity();
        let center = pool.row(best);
        nearest.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = sq_dist(pool.row(i), center);
            if nd < *d {
                *d = nd;
            }
        });
    }
    selected
}

/// Pools every patch vector (grid order, then h, then w) into an N×C matrix.
pub fn pool_patches<T: Scalar>(grids: &[PatchGrid<T>]) -> Result<Matrix<T>> {
    let c = grids.first().map_or(0, |g| g.dims().2);
    if let Some(g) = grids.iter().find(|g| g.dims().2 != c) {
        return Err(Error::Shape(format!("patch dims differ: {c} vs {}", g.dims().2)));
    }
    let mut data = Vec::new();
    for g in grids {
        data.extend_from_slice(g.grid.as_slice());
    }
    let rows = if c == 0 { 0 } else { data.len() / c };
    Matrix::from_vec(rows, c, data)
}

pub fn patchcore_fit<T: Scalar>(train_grids: &[PatchGrid<T>], fraction: f64) -> Result<MemoryBank<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("coreset fraction must be in (0, 1], got {fraction}")));
    }
    let pool = pool_patches(train_grids)?;
    if pool.rows() == 0 || pool.cols() == 0 {
        return Err(Error::Data("no training patches to build a memory bank".into()));
    }
    let n = coreset_size(fraction, pool.rows());
    let coreset = if n == pool.rows() {
        pool.clone()
    } else {
        let picks = greedy_k_center(&pool, n);
        let mut data = Vec::with_capacity(n * pool.cols());
        for &i in &picks {
            data.extend_from_slice(pool.row(i));
        }
        Matrix::from_vec(n, pool.cols(), data)?
    };
    Ok(MemoryBank {
        coreset,
        coreset_fraction: fraction,
        source_count: pool.rows(),
    })
}

/// Euclidean distance from `query` to its nearest bank row (exhaustive).
pub fn nearest_distance<T: Scalar>(query: &[T], bank: &MemoryBank<T>) -> T {
    let mut best = T::infinity();
    for r in 0..bank.len() {
        let d = sq_dist(query, bank.coreset.row(r));
        if d < best {
            best = d;
        }
    }
    best.sqrt()
}

pub fn patchcore_score<T: Scalar>(grid: &PatchGrid<T>, bank: &MemoryBank<T>) -> Result<AnomalyMap<T>> {
    if bank.is_empty() {
        return Err(Error::Data("memory bank is empty".into()));
    }
    let (h, w, c) = grid.dims();
    if c != bank.channels() {
        return Err(Error::Shape(format!(
            "patch dimension {c} does not match memory bank dimension {}",
            bank.channels()
        )));
    }
    let scores: Vec<T> = (0..h * w)
        .into_par_iter()
        .map(|i| nearest_distance(grid.grid.vector(i / w, i % w), bank))
        .collect();
    Ok(AnomalyMap::new(Matrix::from_vec(h, w, scores)?))
}
