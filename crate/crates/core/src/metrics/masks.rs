//! Time-frequency masks and spectrogram-level localization metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::stats::{f1_score, percentile, roc_auc};
use crate::audio::Spectrogram;
use crate::detectors::AnomalyMap;
use crate::error::{Error, Result};
use crate::features::CellRect;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Fraction of the injection region marked as ground truth.
pub const GT_TOP_FRACTION: f64 = 0.4;
/// Percentile a normalized map must exceed to be predicted anomalous.
pub const PREDICTION_PERCENTILE: f64 = 40.0;
pub const DEFAULT_PRO_FPR_LIMIT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskRole {
    GroundTruth,
    Prediction,
}

/// T×F booleans, row-major with time on rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<bool>,
    pub role: MaskRole,
}

impl BinaryMask {
    pub fn empty(rows: usize, cols: usize, role: MaskRole) -> Self {
        BinaryMask {
            rows,
            cols,
            values: vec![false; rows * cols],
            role,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.values[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    /// 1.0 on marked cells, 0.0 elsewhere.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        Matrix::from_fn(self.rows, self.cols, |r, c| if self.get(r, c) { T::one() } else { T::zero() })
    }

    /// True for every row (time instant) with at least one marked cell.
    pub fn any_per_row(&self) -> Vec<bool> {
        (0..self.rows)
            .map(|r| self.values[r * self.cols..(r + 1) * self.cols].iter().any(|&v| v))
            .collect()
    }
}

/// Marks the `⌈0.4·|region|⌉` highest cells of `anomaly_spec` inside `region`,
/// plus every cell tied with the smallest of them.
pub fn spect_ground_truth<T: Scalar>(anomaly_spec: &Spectrogram<T>, region: CellRect) -> Result<BinaryMask> {
    let (t, f) = (anomaly_spec.frames(), anomaly_spec.bands());
    if region.is_empty() {
        return Err(Error::Parameter(format!("empty injection region {region:?}")));
    }
    if region.t1 > t || region.f1 > f {
        return Err(Error::Bounds(format!("region {region:?} exceeds the {t}x{f} spectrogram")));
    }
    let mut inside = Vec::with_capacity(region.area());
    for r in region.t0..region.t1 {
        inside.extend_from_slice(&anomaly_spec.values.row(r)[region.f0..region.f1]);
    }
    inside.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let k = ((GT_TOP_FRACTION * region.area() as f64).ceil() as usize).clamp(1, region.area());
    let threshold = inside[k - 1];
    let mut mask = BinaryMask::empty(t, f, MaskRole::GroundTruth);
    for r in region.t0..region.t1 {
        for c in region.f0..region.f1 {
            mask.set(r, c, anomaly_spec.values.get(r, c) >= threshold);
        }
    }
    Ok(mask)
}

/// Cells strictly above the 40th percentile of the (normalized) map.
pub fn spect_prediction<T: Scalar>(map: &AnomalyMap<T>) -> Result<BinaryMask> {
    let p = percentile(map.values.as_slice(), PREDICTION_PERCENTILE)?;
    let (rows, cols) = map.values.shape();
    Ok(BinaryMask {
        rows,
        cols,
        values: map.values.as_slice().iter().map(|&v| v > p).collect(),
        role: MaskRole::Prediction,
    })
}

/// 4-connected components of the marked cells; returns a label per cell
/// (`usize::MAX` for unmarked) and the component sizes.
pub fn connected_regions(mask: &BinaryMask) -> (Vec<usize>, Vec<usize>) {
    let (rows, cols) = mask.shape();
    let mut label = vec![usize::MAX; rows * cols];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..rows * cols {
        if !mask.values[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = (i / cols, i % cols);
            let mut visit = |j: usize| {
                if mask.values[j] && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - cols);
            }
            if r + 1 < rows {
                visit(i + cols);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < cols {
                visit(i + 1);
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

fn check_pairs<T: Scalar>(maps: &[AnomalyMap<T>], gts: &[BinaryMask]) -> Result<()> {
    if maps.len() != gts.len() {
        return Err(Error::Shape(format!("{} maps but {} masks", maps.len(), gts.len())));
    }
    for (i, (m, g)) in maps.iter().zip(gts).enumerate() {
        if m.values.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "pair {i}: map {:?} vs mask {:?}",
                m.values.shape(),
                g.shape()
            )));
        }
    }
    Ok(())
}

/// Area under the per-region-overlap curve against cell-level FPR, up to
/// `fpr_limit`, divided by `fpr_limit`. Regions are 4-connected components of
/// each ground-truth mask; thresholds sweep every distinct map value.
pub fn au_pro<T: Scalar>(maps: &[AnomalyMap<T>], gts: &[BinaryMask], fpr_limit: f64) -> Result<f64> {
    check_pairs(maps, gts)?;
    if !(fpr_limit > 0.0 && fpr_limit <= 1.0) {
        return Err(Error::Parameter(format!("FPR limit must be in (0, 1], got {fpr_limit}")));
    }
    // per cell: score, region weight (for positives) or negative flag
    let mut cells: Vec<(T, Option<usize>)> = Vec::new();
    let mut region_sizes = Vec::new();
    for (m, g) in maps.iter().zip(gts) {
        let (labels, sizes) = connected_regions(g);
        let offset = region_sizes.len();
        region_sizes.extend(sizes);
        for (&v, &l) in m.values.as_slice().iter().zip(&labels) {
            cells.push((v, (l != usize::MAX).then(|| offset + l)));
        }
    }
    let n_regions = region_sizes.len();
    let negatives = cells.iter().filter(|c| c.1.is_none()).count();
    if n_regions == 0 || negatives == 0 {
        return Err(Error::MetricUndefined(format!(
            "AU-PRO needs anomalous and normal cells ({n_regions} regions, {negatives} normal cells)"
        )));
    }
    if cells.iter().any(|c| c.0.is_nan()) {
        return Err(Error::Data("NaN in anomaly map".into()));
    }
    cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

    let mut curve = vec![(0.0f64, 0.0f64)];
    let (mut fp, mut pro_sum) = (0usize, 0.0f64);
    let mut i = 0;
    while i < cells.len() {
        let v = cells[i].0;
        while i < cells.len() && cells[i].0 == v {
            match cells[i].1 {
                Some(r) => pro_sum += 1.0 / region_sizes[r] as f64,
                None => fp += 1,
            }
            i += 1;
        }
        curve.push((fp as f64 / negatives as f64, pro_sum / n_regions as f64));
    }
    Ok(trapezoid_to(&curve, fpr_limit) / fpr_limit)
}

/// Trapezoid area under a piecewise-linear curve with non-decreasing x, from 0 to `limit`.
pub(crate) fn trapezoid_to(curve: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= limit {
            break;
        }
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
            area += (limit - x0) * (y0 + y) / 2.0;
            break;
        }
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectMetrics {
    pub f1: f64,
    pub roc: f64,
    pub pro: f64,
}

/// F1 from percentile predictions on min-max normalized maps, cell-level ROC
/// and AU-PRO on the maps as given, all pooled over every cell of every map.
pub fn spect_level_metrics<T: Scalar>(
    maps: &[AnomalyMap<T>],
    gts: &[BinaryMask],
    fpr_limit: f64,
) -> Result<SpectMetrics> {
    check_pairs(maps, gts)?;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    let mut scores = Vec::new();
    for (m, g) in maps.iter().zip(gts) {
        let norm = if m.normalized { m.clone() } else { m.normalized() };
        pred.extend(spect_prediction(&norm)?.values);
        truth.extend_from_slice(&g.values);
        scores.extend_from_slice(m.values.as_slice());
    }
    let roc = roc_auc(&scores, &truth)?;
    let pro = au_pro(maps, gts, fpr_limit)?;
    let f1 = f1_score(&pred, &truth).ok_or_else(|| Error::MetricUndefined("no anomalous cells".into()))?;
    Ok(SpectMetrics { f1, roc, pro })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SpectrogramParams;

    fn spec_from(rows: usize, cols: usize, v: Vec<f64>) -> Spectrogram<f64> {
        Spectrogram::from_values(Matrix::from_vec(rows, cols, v).unwrap(), SpectrogramParams::default(), 16000)
            .unwrap()
    }

    fn map(rows: usize, cols: usize, v: Vec<f64>) -> AnomalyMap<f64> {
        AnomalyMap::new(Matrix::from_vec(rows, cols, v).unwrap())
    }

    #[test]
    fn ground_truth_examples() {
        let s = spec_from(2, 5, (1..=10).map(f64::from).collect());
        let m = spect_ground_truth(&s, CellRect::new(0, 2, 0, 5)).unwrap();
        let marked: Vec<usize> = (0..10).filter(|&i| m.values[i]).map(|i| i + 1).collect();
        assert_eq!(marked, vec![7, 8, 9, 10]);

        let uniform = spec_from(3, 3, vec![2.0; 9]);
        let m = spect_ground_truth(&uniform, CellRect::new(0, 2, 1, 3)).unwrap();
        assert_eq!(m.count(), 4);
        assert!(!m.get(2, 2) && !m.get(0, 0));

        let m = spect_ground_truth(&s, CellRect::new(1, 2, 3, 4)).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(1, 3));

        assert!(matches!(spect_ground_truth(&s, CellRect::new(1, 1, 0, 3)), Err(Error::Parameter(_))));
        assert!(matches!(spect_ground_truth(&s, CellRect::new(0, 3, 0, 3)), Err(Error::Bounds(_))));
    }

    #[test]
    fn prediction_examples() {
        assert_eq!(spect_prediction(&map(2, 2, vec![0.3; 4])).unwrap().count(), 0);
        let m = spect_prediction(&map(1, 5, vec![0.0, 0.25, 0.5, 0.75, 1.0])).unwrap();
        assert_eq!(m.values, vec![false, false, true, true, true]);
        let rescaled = spect_prediction(&map(1, 5, vec![1.0, 1.5, 3.0, 9.0, 20.0])).unwrap();
        assert_eq!(rescaled.values, m.values);
    }

    fn gt_00() -> BinaryMask {
        let mut g = BinaryMask::empty(2, 2, MaskRole::GroundTruth);
        g.set(0, 0, true);
        g
    }

    #[test]
    fn pro_two_by_two_examples() {
        let late = au_pro(&[map(2, 2, vec![0.25, 0.1, 0.2, 0.3])], &[gt_00()], 0.3).unwrap();
        assert_eq!(late, 0.0);
        let early = au_pro(&[map(2, 2, vec![0.9, 0.1, 0.2, 0.3])], &[gt_00()], 0.3).unwrap();
        assert!((early - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_map_scores_one_everywhere() {
        let g = gt_00();
        let m = AnomalyMap::new(g.to_matrix::<f64>());
        let r = spect_level_metrics(&[m], &[g], 0.3).unwrap();
        assert_eq!((r.f1, r.roc), (1.0, 1.0));
        assert!((r.pro - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regions_are_four_connected() {
        let mut g = BinaryMask::empty(3, 3, MaskRole::GroundTruth);
        g.set(0, 0, true);
        g.set(1, 1, true);
        g.set(1, 2, true);
        let (_, sizes) = connected_regions(&g);
        assert_eq!(sizes, vec![1, 2]);
    }

    #[test]
    fn no_anomalous_cells_is_undefined() {
        let g = BinaryMask::empty(2, 2, MaskRole::GroundTruth);
        let m = map(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        assert!(matches!(spect_level_metrics(&[m], &[g], 0.3), Err(Error::MetricUndefined(_))));
    }
}
