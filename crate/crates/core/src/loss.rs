//! Weighted cross-entropy evaluation and probability map combination.
//!
//! `L = -sum_l sum_p w(p) * y_l(p) * ln(max(z_l(p), 1e-12))`, with no
//! normalization by pixel count. Sums are taken pairwise over pixels in a
//! fixed order, so totals do not depend on scheduling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{check_same_shape, Grid, OneHotMap, ProbabilityMap, WeightMap};

/// Lower clamp applied to probabilities before the logarithm.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub per_class: Vec<f64>,
    pub pixel_count: usize,
}

pub fn weighted_cross_entropy(y: &OneHotMap, z: &ProbabilityMap, w: &WeightMap) -> Result<LossReport> {
    check_shapes(y, z, w)?;
    let planes: Vec<&[f64]> = z.planes().iter().map(|p| p.data()).collect();
    Ok(evaluate(y, &planes, w))
}

fn check_shapes(y: &OneHotMap, z: &ProbabilityMap, w: &WeightMap) -> Result<()> {
    if y.channels() != z.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} one-hot channels vs {} probability channels",
            y.channels(),
            z.channels()
        )));
    }
    check_same_shape(y.plane(0), z.plane(0), "one-hot and probability maps")?;
    check_same_shape(y.plane(0), w.grid(), "one-hot and weight maps")
}

fn evaluate(y: &OneHotMap, z: &[&[f64]], w: &WeightMap) -> LossReport {
    let weights = w.data();
    let mut terms = vec![0.0; weights.len()];
    let per_class: Vec<f64> = (0..y.channels())
        .map(|l| {
            let truth = y.plane(l).data();
            for (i, term) in terms.iter_mut().enumerate() {
                *term = if truth[i] { -weights[i] * z[l][i].max(LOG_EPSILON).ln() } else { 0.0 };
            }
            pairwise_sum(&terms)
        })
        .collect();
    LossReport {
        total: per_class.iter().sum(),
        per_class,
        pixel_count: weights.len(),
    }
}

/// Fixed-tree summation.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Central finite-difference derivative of the loss with respect to every
/// probability entry, each perturbed on its own (no renormalization).
/// Intended for cross-checking gradients of an external trainer on small
/// rasters; cost is two loss evaluations per entry.
pub fn finite_difference_gradient(
    y: &OneHotMap,
    z: &ProbabilityMap,
    w: &WeightMap,
    step: f64,
) -> Result<Vec<Grid<f64>>> {
    check_shapes(y, z, w)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let mut planes: Vec<Vec<f64>> = z.planes().iter().map(|p| p.data().to_vec()).collect();
    let mut grads = Vec::with_capacity(planes.len());
    for l in 0..planes.len() {
        let mut grad = vec![0.0; planes[l].len()];
        for i in 0..grad.len() {
            let orig = planes[l][i];
            planes[l][i] = orig + step;
            let up = evaluate(y, &planes.iter().map(Vec::as_slice).collect::<Vec<_>>(), w).total;
            planes[l][i] = orig - step;
            let down = evaluate(y, &planes.iter().map(Vec::as_slice).collect::<Vec<_>>(), w).total;
            planes[l][i] = orig;
            grad[i] = (up - down) / (2.0 * step);
        }
        grads.push(Grid::new(z.width(), z.height(), grad)?);
    }
    Ok(grads)
}

/// Per-class mean of several probability maps followed by a softmax over
/// classes. The mean is order independent.
pub fn combine_probability_maps(maps: &[ProbabilityMap]) -> Result<ProbabilityMap> {
    let first = maps.first().ok_or(Error::Empty("probability map list"))?;
    if maps.len() < 2 {
        return Err(Error::InvalidParameter("combination needs at least two maps".into()));
    }
    for m in &maps[1..] {
        if m.channels() != first.channels() {
            return Err(Error::ShapeMismatch("probability maps differ in channel count".into()));
        }
        check_same_shape(first.plane(0), m.plane(0), "combined probability maps")?;
    }
    let channels = first.channels();
    let n = first.pixel_count();
    let count = maps.len() as f64;
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; n]; channels];
    let mut column = Vec::with_capacity(maps.len());
    let mut means = vec![0.0; channels];
    for i in 0..n {
        for (l, mean) in means.iter_mut().enumerate() {
            column.clear();
            column.extend(maps.iter().map(|m| m.at(l, i)));
            column.sort_by(f64::total_cmp);
            *mean = column.iter().sum::<f64>() / count;
        }
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = means.iter().map(|m| (m - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (l, e) in exps.iter().enumerate() {
            out[l][i] = e / total;
        }
    }
    let planes = out
        .into_iter()
        .map(|data| Grid::new(first.width(), first.height(), data))
        .collect::<Result<Vec<_>>>()?;
    ProbabilityMap::new(planes)
}
