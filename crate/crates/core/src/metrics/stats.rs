//! Order statistics and threshold-free / threshold-swept classification scores.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn sorted_finite<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in percentile input".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(v)
}

/// Linear-interpolation percentile: rank `r = q/100 · (n − 1)` on the sorted values.
pub fn percentile<T: Scalar>(values: &[T], q: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Data("percentile of an empty collection".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Parameter(format!("percentile must be in [0, 100], got {q}")));
    }
    let v = sorted_finite(values)?;
    Ok(percentile_sorted(&v, q))
}

pub(crate) fn percentile_sorted<T: Scalar>(v: &[T], q: f64) -> T {
    let r = q / 100.0 * (v.len() - 1) as f64;
    let lo = r.floor() as usize;
    let frac = T::of(r - lo as f64);
    if lo + 1 >= v.len() {
        v[lo]
    } else {
        v[lo] + frac * (v[lo + 1] - v[lo])
    }
}

fn class_counts(labels: &[bool], n_scores: usize) -> Result<(usize, usize)> {
    if labels.len() != n_scores {
        return Err(Error::Shape(format!("{n_scores} scores but {} labels", labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined(format!(
            "need both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

fn descending<T: Scalar>(scores: &[T]) -> Result<Vec<usize>> {
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    Ok(idx)
}

/// Probability that a random positive outranks a random negative, ties counting one half.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(labels, scores.len())?;
    let order = descending(scores)?;
    // walk tie groups from the top; each negative in a group beats the
    // positives below it and splits the ones tied with it
    let mut wins = 0.0f64;
    let mut pos_above = 0usize;
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == v {
            if labels[order[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        wins += gn as f64 * (pos_above as f64 + 0.5 * gp as f64);
        pos_above += gp;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Best F1 over thresholds at every distinct score (positive when `score >= t`),
/// with the lowest threshold that attains it.
pub fn best_f1<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<(f64, T)> {
    let (pos, _) = class_counts(labels, scores.len())?;
    let order = descending(scores)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = (-1.0f64, scores[order[0]]);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let f1 = 2.0 * tp as f64 / (tp + fp + pos) as f64;
        if f1 >= best.0 {
            best = (f1, v);
        }
    }
    Ok(best)
}

/// F1 of fixed binary predictions; `None` when there are no positives at all.
pub fn f1_score(pred: &[bool], truth: &[bool]) -> Option<f64> {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
