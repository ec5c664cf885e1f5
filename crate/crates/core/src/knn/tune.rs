//! Leave-one-out selection of k from a single neighbour pass.
//!
//! Each training point is queried for `k_max + 1` neighbours against the full
//! index and drops itself. Removing a point from the index does not change
//! the order of the others, so the first `k` remaining neighbours are exactly
//! what a refit without that point would return, and the running weighted
//! sums give every `k ≤ k_max` at once.

use serde::{Deserialize, Serialize};

use super::{build_index, MetricSpec, NeighborIndex, WeightedSum, Weighting};
use crate::descriptors::DescriptorBatch;
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub k_best: usize,
    /// Leave-one-out MAE for `k = 1..=k_max` (entry `k - 1`).
    pub loo_mae: Vec<f64>,
}

impl TuneResult {
    pub fn mae_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.loo_mae.get(i)).copied()
    }
}

pub fn tune_k(
    points: &DescriptorBatch,
    labels: &[f64],
    metric: &MetricSpec,
    k_max: usize,
    weighting: Weighting,
) -> Result<TuneResult> {
    tune_k_on_index(&build_index(points, labels, metric)?, k_max, weighting)
}

/// Requires `2 ≤ n` and `1 ≤ k_max < n`. Ties in MAE go to the smaller k.
pub fn tune_k_on_index(index: &NeighborIndex, k_max: usize, weighting: Weighting) -> Result<TuneResult> {
    let n = index.len();
    if n < 2 {
        return Err(Error::config("k tuning needs at least 2 points"));
    }
    if k_max == 0 || k_max >= n {
        return Err(Error::config(format!("k_max must be in 1..{n}, got {k_max}")));
    }
    let errors: Vec<Vec<f64>> = par::map_range(n, |i| {
        let q = index.prepare_stored(i);
        let cands = index.search(&q, k_max + 1);
        let mut acc = WeightedSum::default();
        let y = index.labels[i];
        cands
            .iter()
            .filter(|c| c.index != i)
            .take(k_max)
            .map(|c| {
                acc.push(c.distance, index.labels[c.index], weighting);
                (acc.value(weighting) - y).abs()
            })
            .collect()
    });
    let loo_mae: Vec<f64> = (0..k_max)
        .map(|k| errors.iter().map(|e| e[k]).sum::<f64>() / n as f64)
        .collect();
    let mut k_best = 1;
    for (i, &m) in loo_mae.iter().enumerate() {
        if m < loo_mae[k_best - 1] {
            k_best = i + 1;
        }
    }
    Ok(TuneResult { k_best, loo_mae })
}
