use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

/// Multi-resolution feature maps, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapPyramid<T> {
    pub levels: Vec<Tensor3<T>>,
    pub level_names: Vec<String>,
    /// (T, F) of the spectrogram the features were computed from.
    pub source_shape: (usize, usize),
}

/// Name of the `i`-th (0-based) level; shared by the reference and imported paths.
pub fn level_name(i: usize) -> String {
    format!("block{}", i + 1)
}

impl<T: Scalar> FeatureMapPyramid<T> {
    pub fn new(levels: Vec<Tensor3<T>>, level_names: Vec<String>, source_shape: (usize, usize)) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Shape("a pyramid needs at least one level".into()));
        }
        if levels.len() != level_names.len() {
            return Err(Error::Shape(format!(
                "{} levels but {} names",
                levels.len(),
                level_names.len()
            )));
        }
        for pair in levels.windows(2) {
            if pair[1].height() > pair[0].height() || pair[1].width() > pair[0].width() {
                return Err(Error::Shape(format!(
                    "level resolutions must be non-increasing, got {:?} then {:?}",
                    pair[0].shape(),
                    pair[1].shape()
                )));
            }
        }
        for (name, level) in level_names.iter().zip(&levels) {
            if level.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("level {name} holds non-finite values")));
            }
        }
        Ok(FeatureMapPyramid {
            levels,
            level_names,
            source_shape,
        })
    }

    /// Pyramid with positional names `block1..blockN` and the first level's
    /// resolution as the source shape.
    pub fn from_levels(levels: Vec<Tensor3<T>>) -> Result<Self> {
        let names = (0..levels.len()).map(level_name).collect();
        let source = levels.first().map_or((0, 0), |l| (l.height(), l.width()));
        Self::new(levels, names, source)
    }

    pub fn with_source_shape(mut self, source_shape: (usize, usize)) -> Self {
        self.source_shape = source_shape;
        self
    }

    pub fn level(&self, name: &str) -> Option<&Tensor3<T>> {
        self.level_names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.levels[i])
    }
}

/// Spectrogram cell rectangle `[t0, t1) × [f0, f1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub t0: usize,
    pub t1: usize,
    pub f0: usize,
    pub f1: usize,
}

impl CellRect {
    pub fn new(t0: usize, t1: usize, f0: usize, f1: usize) -> Self {
        CellRect { t0, t1, f0, f1 }
    }

    pub fn area(&self) -> usize {
        self.t1.saturating_sub(self.t0) * self.f1.saturating_sub(self.f0)
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, t: usize, f: usize) -> bool {
        (self.t0..self.t1).contains(&t) && (self.f0..self.f1).contains(&f)
    }
}

/// Maps each grid position to the spectrogram cells it covers, from the
/// (T, F) / (H, W) ratios with floor boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordMap {
    pub source: (usize, usize),
    pub grid: (usize, usize),
}

impl CoordMap {
    pub fn rect(&self, h: usize, w: usize) -> CellRect {
        let (t, f) = self.source;
        let (gh, gw) = self.grid;
        CellRect {
            t0: h * t / gh,
            t1: (h + 1) * t / gh,
            f0: w * f / gw,
            f1: (w + 1) * f / gw,
        }
    }
}

/// H×W×C patch vectors plus their spectrogram footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid<T> {
    pub grid: Tensor3<T>,
    pub coord_map: CoordMap,
}

impl<T: Scalar> PatchGrid<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.grid.shape()
    }

    /// The H·W patch vectors, each of length C.
    pub fn patches(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.grid.vectors()
    }
}

/// Resizes every selected level to the first selected level's (H, W) and
/// concatenates channels in selection order.
pub fn align_and_concat<T: Scalar>(p: &FeatureMapPyramid<T>, selected: &[String]) -> Result<PatchGrid<T>> {
    if selected.is_empty() {
        return Err(Error::Parameter("no feature levels selected".into()));
    }
    let levels = selected
        .iter()
        .map(|name| {
            p.level(name).ok_or_else(|| {
                Error::Parameter(format!(
                    "level '{name}' not in pyramid (available: {})",
                    p.level_names.join(", ")
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (h, w) = (levels[0].height(), levels[0].width());
    let resized: Vec<Tensor3<T>> = levels.iter().map(|l| l.resize_bilinear(h, w)).collect();
    let c: usize = resized.iter().map(|l| l.channels()).sum();
    let mut grid = Tensor3::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            let dst = grid.vector_mut(y, x);
            let mut at = 0;
            for l in &resized {
                let v = l.vector(y, x);
                dst[at..at + v.len()].copy_from_slice(v);
                at += v.len();
            }
        }
    }
    Ok(PatchGrid {
        grid,
        coord_map: CoordMap {
            source: p.source_shape,
            grid: (h, w),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn level(h: usize, w: usize, c: usize, f: impl Fn(usize) -> f64) -> Tensor3<f64> {
        Tensor3::from_vec(h, w, c, (0..h * w * c).map(f).collect()).unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_level_is_unchanged() {
        let l = level(4, 3, 2, |i| i as f64 * 0.5);
        let p = FeatureMapPyramid::from_levels(vec![l.clone()]).unwrap();
        let g = align_and_concat(&p, &names(&["block1"])).unwrap();
        assert_eq!(g.grid, l);
    }

    #[test]
    fn concat_shapes() {
        let p = FeatureMapPyramid::from_levels(vec![
            level(32, 32, 16, |i| i as f64),
            level(16, 16, 32, |i| -(i as f64)),
        ])
        .unwrap();
        let g = align_and_concat(&p, &names(&["block1", "block2"])).unwrap();
        assert_eq!(g.dims(), (32, 32, 48));
        assert_eq!(g.patches().len(), 32 * 32);
        assert!(g.patches().all(|v| v.len() == 48));
    }

    #[test]
    fn constant_level_stays_constant() {
        let p = FeatureMapPyramid::from_levels(vec![level(8, 8, 1, |_| 0.0), level(4, 4, 3, |_| 1.25)]).unwrap();
        let g = align_and_concat(&p, &names(&["block1", "block2"])).unwrap();
        assert!(g.patches().all(|v| v[1..].iter().all(|&x| x == 1.25)));
    }

    #[test]
    fn empty_or_unknown_selection_rejected() {
        let p = FeatureMapPyramid::from_levels(vec![level(2, 2, 1, |_| 0.0)]).unwrap();
        assert!(matches!(align_and_concat(&p, &[]), Err(Error::Parameter(_))));
        assert!(matches!(align_and_concat(&p, &names(&["block7"])), Err(Error::Parameter(_))));
    }

    #[test]
    fn increasing_resolution_rejected() {
        let r = FeatureMapPyramid::from_levels(vec![level(2, 2, 1, |_| 0.0), level(4, 4, 1, |_| 0.0)]);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn coord_map_tiles_plane(t in 1usize..80, f in 1usize..80, gh in 1usize..20, gw in 1usize..20) {
            prop_assume!(gh <= t && gw <= f);
            let cm = CoordMap { source: (t, f), grid: (gh, gw) };
            let mut cover = vec![0u8; t * f];
            for h in 0..gh {
                for w in 0..gw {
                    let r = cm.rect(h, w);
                    prop_assert!(!r.is_empty());
                    for tt in r.t0..r.t1 {
                        for ff in r.f0..r.f1 {
                            cover[tt * f + ff] += 1;
                        }
                    }
                }
            }
            prop_assert!(cover.iter().all(|&c| c == 1));
        }

        #[test]
        fn alignment_idempotent_at_shared_resolution(h in 1usize..6, w in 1usize..6, c1 in 1usize..4, c2 in 1usize..4, seed in 0u64..100) {
            let a = level(h, w, c1, |i| ((i as u64 + seed) as f64).sin());
            let b = level(h, w, c2, |i| ((i as u64 * 3 + seed) as f64).cos());
            let p = FeatureMapPyramid::from_levels(vec![a.clone(), b.clone()]).unwrap();
            let g = align_and_concat(&p, &names(&["block1", "block2"])).unwrap();
            let again = FeatureMapPyramid::from_levels(vec![g.grid.clone()]).unwrap();
            let g2 = align_and_concat(&again, &names(&["block1"])).unwrap();
            prop_assert_eq!(&g.grid, &g2.grid);
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(&g.grid.vector(y, x)[..c1], a.vector(y, x));
                    prop_assert_eq!(&g.grid.vector(y, x)[c1..], b.vector(y, x));
                }
            }
        }
    }
}
