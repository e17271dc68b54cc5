//! Panoptic evaluation of predicted instances against ground truth.
//!
//! Instances match when their Jaccard index is strictly above 0.5, which
//! makes the matching unique without an assignment step.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{check_same_shape, InstanceMap, Mask};

/// `|a ∩ b| / |a ∪ b|`.
pub fn jaccard(a: &Mask, b: &Mask) -> Result<f64> {
    check_same_shape(a, b, "jaccard")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Err(Error::Empty("jaccard of two empty sets"));
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: u32,
    pub pred: u32,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by ground-truth label.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

/// Pairs every ground-truth instance with the prediction it overlaps at
/// Jaccard > 0.5, if any. Label 0 is background on both sides.
pub fn match_instances(gt: &InstanceMap, pred: &InstanceMap) -> Result<MatchResult> {
    check_same_shape(gt.grid(), pred.grid(), "match_instances")?;
    let mut gt_area = BTreeMap::<u32, usize>::new();
    let mut pred_area = BTreeMap::<u32, usize>::new();
    let mut overlap = BTreeMap::<(u32, u32), usize>::new();
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        if g != 0 {
            *gt_area.entry(g).or_default() += 1;
        }
        if p != 0 {
            *pred_area.entry(p).or_default() += 1;
        }
        if g != 0 && p != 0 {
            *overlap.entry((g, p)).or_default() += 1;
        }
    }

    let mut pairs = Vec::new();
    for (&(g, p), &inter) in &overlap {
        let union = gt_area[&g] + pred_area[&p] - inter;
        // inter / union > 1/2 without rounding
        if 2 * inter > union {
            pairs.push(MatchedPair { gt: g, pred: p, jaccard: inter as f64 / union as f64 });
        }
    }
    let matched_gt: BTreeSet<u32> = pairs.iter().map(|m| m.gt).collect();
    let matched_pred: BTreeSet<u32> = pairs.iter().map(|m| m.pred).collect();
    debug_assert_eq!(matched_gt.len(), pairs.len());
    debug_assert_eq!(matched_pred.len(), pairs.len());
    Ok(MatchResult {
        unmatched_gt: gt_area.keys().copied().filter(|l| !matched_gt.contains(l)).collect(),
        unmatched_pred: pred_area.keys().copied().filter(|l| !matched_pred.contains(l)).collect(),
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p05: f64,
    pub rq: f64,
    pub sq: f64,
    pub pq: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricsReport {
    /// Builds a report from match counts and the sum of matched Jaccards.
    ///
    /// With nothing to match on either side every metric is 1. Without any
    /// match `sq` is 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, jaccard_sum: f64) -> Self {
        if tp + fp + fn_ == 0 {
            return MetricsReport { p05: 1.0, rq: 1.0, sq: 1.0, pq: 1.0, tp, fp, fn_ };
        }
        let tpf = tp as f64;
        let p05 = if tp + fp == 0 { 0.0 } else { tpf / (tp + fp) as f64 };
        let rq = tpf / (tpf + 0.5 * fp as f64 + 0.5 * fn_ as f64);
        let sq = if tp == 0 { 0.0 } else { jaccard_sum / tpf };
        MetricsReport { p05, rq, sq, pq: rq * sq, tp, fp, fn_ }
    }
}

pub fn panoptic_metrics(m: &MatchResult) -> MetricsReport {
    let sum = m.pairs.iter().map(|p| p.jaccard).sum();
    MetricsReport::from_counts(m.pairs.len(), m.unmatched_pred.len(), m.unmatched_gt.len(), sum)
}

/// Means of the per-image metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub p05: f64,
    pub rq: f64,
    pub sq: f64,
    pub pq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    /// Metrics from counts pooled over all images.
    pub pooled: MetricsReport,
    pub per_image: Vec<MetricsReport>,
    pub per_image_mean: AveragedMetrics,
}

pub fn evaluate_dataset(pairs: &[(InstanceMap, InstanceMap)]) -> Result<DatasetReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    let matches = pairs
        .par_iter()
        .map(|(gt, pred)| match_instances(gt, pred))
        .collect::<Result<Vec<_>>>()?;

    let (mut tp, mut fp, mut fn_, mut sum) = (0, 0, 0, 0.0);
    for m in &matches {
        tp += m.pairs.len();
        fp += m.unmatched_pred.len();
        fn_ += m.unmatched_gt.len();
        sum += m.pairs.iter().map(|p| p.jaccard).sum::<f64>();
    }
    let per_image: Vec<MetricsReport> = matches.iter().map(panoptic_metrics).collect();
    let n = per_image.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| per_image.iter().map(f).sum::<f64>() / n;
    let per_image_mean = AveragedMetrics {
        p05: mean(|r| r.p05),
        rq: mean(|r| r.rq),
        sq: mean(|r| r.sq),
        pq: mean(|r| r.pq),
    };
    Ok(DatasetReport {
        pooled: MetricsReport::from_counts(tp, fp, fn_, sum),
        per_image,
        per_image_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::Grid;

    fn labels(width: usize, data: &[u32]) -> InstanceMap {
        InstanceMap::from_vec(width, data.len() / width, data.to_vec()).unwrap()
    }

    #[test]
    fn jaccard_basics() {
        let a = Grid::from_fn(20, 1, |_, c| c < 10);
        let b = Grid::from_fn(20, 1, |_, c| (5..15).contains(&c));
        assert!((jaccard(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        let c = Grid::from_fn(20, 1, |_, c| c >= 10);
        assert_eq!(jaccard(&a, &c).unwrap(), 0.0);
        let empty = Grid::filled(20, 1, false);
        assert!(jaccard(&empty, &empty).is_err());
    }

    #[test]
    fn half_split_does_not_match() {
        let gt = labels(4, &[1, 1, 1, 1]);
        let pred = labels(4, &[1, 1, 2, 2]);
        let m = match_instances(&gt, &pred).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt, vec![1]);
        assert_eq!(m.unmatched_pred, vec![1, 2]);
    }

    #[test]
    fn one_hit_one_miss() {
        let gt = labels(4, &[1, 1, 0, 2]);
        let pred = labels(4, &[7, 7, 0, 0]);
        let r = panoptic_metrics(&match_instances(&gt, &pred).unwrap());
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 1));
        assert!((r.rq - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.p05, 1.0);
    }

    #[test]
    fn formula_example() {
        let r = MetricsReport::from_counts(1, 0, 1, 0.9);
        assert!((r.rq - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.sq - 0.9).abs() < 1e-12);
        assert!((r.pq - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_conventions() {
        let empty = labels(2, &[0, 0]);
        let r = panoptic_metrics(&match_instances(&empty, &empty).unwrap());
        assert_eq!((r.p05, r.rq, r.sq, r.pq), (1.0, 1.0, 1.0, 1.0));
        let r = panoptic_metrics(&match_instances(&labels(2, &[1, 0]), &empty).unwrap());
        assert_eq!((r.sq, r.pq), (0.0, 0.0));
    }

    #[test]
    fn pooled_counts() {
        let gt = labels(4, &[1, 0, 2, 0]);
        let perfect = (gt.clone(), gt.clone());
        let missed = (gt.clone(), labels(4, &[0, 0, 0, 0]));
        let report = evaluate_dataset(&[perfect.clone(), missed]).unwrap();
        assert!((report.pooled.rq - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(report.per_image.len(), 2);
        assert!((report.per_image_mean.pq - 0.5).abs() < 1e-15);

        let single = evaluate_dataset(std::slice::from_ref(&perfect)).unwrap();
        assert_eq!(single.pooled, single.per_image[0]);
        assert!(evaluate_dataset(&[]).is_err());
    }
}
