//! Quantiles of neighbour labels, calibration curves and neighbour reports.

use serde::{Deserialize, Serialize};

use super::{knn_predict, NeighborSet, Weighting};
use crate::error::{Error, Result};

/// Linear-interpolation quantile of ascending `sorted`: position
/// `h = (n - 1) q` between the neighbouring order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = (h.floor() as usize).min(n - 1);
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    let t = h - lo as f64;
    if t == 0.0 {
        return a;
    }
    // Clamped so rounding cannot step past the next order statistic.
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

fn check_q(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::config(format!("quantile level {q} is outside [0, 1]")))
    }
}

/// Quantiles of the unweighted neighbour labels.
pub fn predict_quantiles(ns: &NeighborSet, qs: &[f64]) -> Result<Vec<f64>> {
    if ns.is_empty() {
        return Err(Error::config("quantiles of an empty neighbour set"));
    }
    qs.iter().try_for_each(|&q| check_q(q))?;
    let mut sorted = ns.labels.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(qs.iter().map(|&q| quantile(&sorted, q)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub nominal: f64,
    pub empirical: f64,
}

/// For each nominal level, the fraction of items whose true label lies
/// strictly below its predicted quantile at that level.
///
/// `predicted[i][j]` is item `i`'s predicted quantile at `nominal[j]`.
pub fn calibration_curve(predicted: &[Vec<f64>], truth: &[f64], nominal: &[f64]) -> Result<Vec<CalibrationPoint>> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} quantile predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::shape("calibration needs at least one item"));
    }
    if let Some(row) = predicted.iter().find(|r| r.len() != nominal.len()) {
        return Err(Error::shape(format!(
            "{} predicted quantiles for {} nominal levels",
            row.len(),
            nominal.len()
        )));
    }
    Ok(nominal
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let below = predicted.iter().zip(truth).filter(|(r, &y)| y < r[j]).count();
            CalibrationPoint {
                nominal: p,
                empirical: below as f64 / truth.len() as f64,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborRow {
    pub rank: usize,
    pub index: usize,
    pub id: String,
    pub composition: Option<String>,
    pub distance: f64,
    pub label: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileValue {
    pub q: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub prediction: f64,
    pub weighting: Weighting,
    pub quantiles: Vec<QuantileValue>,
    pub neighbors: Vec<NeighborRow>,
}

/// Neighbour-by-neighbour account of one prediction. `ids` and
/// `compositions` are indexed like the training points of the index.
pub fn explain(
    ns: &NeighborSet,
    weighting: Weighting,
    ids: &[String],
    compositions: &[Option<String>],
    qs: &[f64],
) -> Result<ExplainReport> {
    if ids.len() != compositions.len() {
        return Err(Error::shape(format!("{} ids with {} compositions", ids.len(), compositions.len())));
    }
    if let Some(&bad) = ns.indices.iter().find(|&&i| i >= ids.len()) {
        return Err(Error::shape(format!("neighbour index {bad} outside the {} training items", ids.len())));
    }
    let values = predict_quantiles(ns, qs)?;
    Ok(ExplainReport {
        prediction: knn_predict(ns, weighting),
        weighting,
        quantiles: qs
            .iter()
            .zip(values)
            .map(|(&q, value)| QuantileValue { q, value })
            .collect(),
        neighbors: ns
            .indices
            .iter()
            .zip(&ns.distances)
            .zip(&ns.labels)
            .enumerate()
            .map(|(rank, ((&index, &distance), &label))| NeighborRow {
                rank: rank + 1,
                index,
                id: ids[index].clone(),
                composition: compositions[index].clone(),
                distance,
                label,
            })
            .collect(),
    })
}
