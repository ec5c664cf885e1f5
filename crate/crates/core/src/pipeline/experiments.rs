//! Cross-validated learning curves, extrapolation runs, k sweeps and
//! calibration curves.
//!
//! Jobs run one after another; parallelism lives inside each model so that
//! CPU-time measurements of different models are comparable.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, HoldoutFilter, ModelKind};
use super::data::ExperimentData;
use super::models::{fit_model, knn_metric, StageLog};
use crate::dataset::{make_folds, subsample, FoldPlan};
use crate::error::{Error, Result};
use crate::knn::{
    build_index, calibration_curve, predict_quantiles, query_batch, tune_k_on_index, CalibrationPoint, WeightedSum,
};

/// One (model, split, size, fold) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub model: String,
    /// `cv`, `extrapolation` or `interpolation`.
    pub split: String,
    pub train_size: usize,
    pub fold: usize,
    pub seed: u64,
    pub mae: f64,
    pub train_cpu_s: f64,
    pub predict_cpu_s: f64,
    pub n_test: usize,
    /// Chosen hyperparameters as a JSON object.
    pub hyperparameters: String,
}

/// The items one training stage used and how many of them were test items
/// (always zero for a completed run).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub split: String,
    pub fold: usize,
    pub train_size: usize,
    pub model: String,
    pub stage: String,
    pub n_items: usize,
    pub test_overlap: usize,
    pub items: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<ExperimentRecord>,
    pub audit: Vec<AuditEntry>,
}

/// Seed for everything drawn inside one fold. Shared by all sizes and
/// models so that training sets are nested across sizes.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len() as f64
}

struct Audit<'a> {
    split: &'a str,
    fold: usize,
    train_size: usize,
    model: ModelKind,
}

fn audit_stages(ctx: &Audit<'_>, log: &StageLog, test: &HashSet<usize>, out: &mut Vec<AuditEntry>) -> Result<()> {
    for (stage, idx) in &log.stages {
        let overlap = idx.iter().filter(|i| test.contains(i)).count();
        if overlap > 0 {
            return Err(Error::config(format!(
                "stage `{stage}` of {} used {overlap} held-out items",
                ctx.model
            )));
        }
        out.push(AuditEntry {
            split: ctx.split.to_string(),
            fold: ctx.fold,
            train_size: ctx.train_size,
            model: ctx.model.name().to_string(),
            stage: stage.clone(),
            n_items: idx.len(),
            test_overlap: 0,
            items: idx.clone(),
        });
    }
    Ok(())
}

/// Largest training size every fold can supply.
pub fn max_cv_train_size(plan: &FoldPlan) -> usize {
    plan.n - plan.fold_sizes().into_iter().max().unwrap_or(0)
}

/// Fits every configured model at every configured size on every fold.
///
/// Training sets are drawn from the fold's training part only, and for a
/// fixed fold the smaller sets are prefixes of the larger ones.
pub fn run_cv_learning_curve(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<RunReport> {
    cfg.validate()?;
    let plan = make_folds(data.len(), cfg.k_cv, cfg.seed)?;
    let cap = max_cv_train_size(&plan);
    if let Some(&bad) = cfg.sizes.iter().find(|&&s| s > cap) {
        return Err(Error::config(format!(
            "training size {bad} exceeds what {}-fold CV on {} items allows (at most {cap})",
            cfg.k_cv,
            data.len()
        )));
    }
    let mut report = RunReport::default();
    for fold in 0..cfg.k_cv {
        let test = plan.test_indices(fold);
        let pool = plan.train_indices(fold);
        let test_set: HashSet<usize> = test.iter().copied().collect();
        let y_test = data.labels_at(&test);
        let seed = fold_seed(cfg.seed, fold);
        for &size in &cfg.sizes {
            let train = subsample(&pool, size, seed)?;
            for &model in &cfg.models {
                log::info!("cv fold {fold} size {size} {model}");
                let mut log = StageLog::default();
                let fitted = fit_model(model, data, &train, cfg, seed, &mut log)?;
                let ctx = Audit { split: "cv", fold, train_size: size, model };
                audit_stages(&ctx, &log, &test_set, &mut report.audit)?;
                let (pred, predict_cpu_s) = fitted.predict(data, &test)?;
                report.records.push(ExperimentRecord {
                    model: model.name().to_string(),
                    split: "cv".to_string(),
                    train_size: size,
                    fold,
                    seed: cfg.seed,
                    mae: mae(&pred, &y_test),
                    train_cpu_s: fitted.train_cpu_s,
                    predict_cpu_s,
                    n_test: test.len(),
                    hyperparameters: fitted.hyperparameters.to_string(),
                });
            }
        }
    }
    Ok(report)
}

/// Positions selected by `filter` and the rest.
pub fn holdout_split(data: &ExperimentData, filter: &HoldoutFilter) -> Result<(Vec<usize>, Vec<usize>)> {
    let holdout = filter.select(&data.compositions, &data.n_atoms);
    if holdout.is_empty() {
        return Err(Error::config(format!("holdout filter {filter:?} matches no items")));
    }
    let held: HashSet<usize> = holdout.iter().copied().collect();
    let rest: Vec<usize> = (0..data.len()).filter(|i| !held.contains(i)).collect();
    if rest.is_empty() {
        return Err(Error::config(format!("holdout filter {filter:?} matches every item")));
    }
    Ok((holdout, rest))
}

/// Trains on items outside the holdout and scores both the holdout
/// (`extrapolation`) and an in-distribution test set carved from the
/// remaining items (`interpolation`).
pub fn run_extrapolation(cfg: &ExperimentConfig, data: &ExperimentData, filter: &HoldoutFilter) -> Result<RunReport> {
    cfg.validate()?;
    let (holdout, rest) = holdout_split(data, filter)?;
    let plan = make_folds(rest.len(), cfg.k_cv, cfg.seed)?;
    let interp: Vec<usize> = plan.test_indices(0).into_iter().map(|i| rest[i]).collect();
    let pool: Vec<usize> = plan.train_indices(0).into_iter().map(|i| rest[i]).collect();
    if let Some(&bad) = cfg.sizes.iter().find(|&&s| s > pool.len()) {
        return Err(Error::config(format!(
            "training size {bad} exceeds the {} items left outside the holdout and interpolation test set",
            pool.len()
        )));
    }
    let excluded: HashSet<usize> = holdout.iter().chain(&interp).copied().collect();
    let seed = fold_seed(cfg.seed, 0);
    let mut report = RunReport::default();
    for &size in &cfg.sizes {
        let train = subsample(&pool, size, seed)?;
        for &model in &cfg.models {
            log::info!("extrapolation size {size} {model}");
            let mut log = StageLog::default();
            let fitted = fit_model(model, data, &train, cfg, seed, &mut log)?;
            let ctx = Audit { split: "extrapolation", fold: 0, train_size: size, model };
            audit_stages(&ctx, &log, &excluded, &mut report.audit)?;
            for (split, test) in [("extrapolation", &holdout), ("interpolation", &interp)] {
                let (pred, predict_cpu_s) = fitted.predict(data, test)?;
                report.records.push(ExperimentRecord {
                    model: model.name().to_string(),
                    split: split.to_string(),
                    train_size: size,
                    fold: 0,
                    seed: cfg.seed,
                    mae: mae(&pred, &data.labels_at(test)),
                    train_cpu_s: fitted.train_cpu_s,
                    predict_cpu_s,
                    n_test: test.len(),
                    hyperparameters: fitted.hyperparameters.to_string(),
                });
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSweepCell {
    pub k: usize,
    pub train_size: usize,
    pub mae: f64,
}

/// Test MAE of the sweep model for every `(k, size)` pair, on the first CV
/// fold. One neighbour query per size serves all k values. Values of k
/// above the training size are skipped.
pub fn run_k_sweep(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Vec<KSweepCell>> {
    cfg.validate()?;
    let kind = cfg.k_sweep.model;
    let plan = make_folds(data.len(), cfg.k_cv, cfg.seed)?;
    let test = plan.test_indices(0);
    let pool = plan.train_indices(0);
    let y_test = data.labels_at(&test);
    let seed = fold_seed(cfg.seed, 0);
    let weighting = cfg.knn.weighting;
    let mut cells = Vec::new();
    for &size in &cfg.sizes {
        let train = subsample(&pool, size.min(pool.len()), seed)?;
        let mut log = StageLog::default();
        let (metric, local, _, _) = knn_metric(kind, data, &train, cfg, seed, &mut log)?;
        let index = build_index(&data.batch(&train, local), &data.labels_at(&train), &metric)?;
        let ks: Vec<usize> = cfg.k_sweep.k_values.iter().copied().filter(|&k| k <= train.len()).collect();
        if ks.len() < cfg.k_sweep.k_values.len() {
            log::warn!("k values above the training size {} skipped", train.len());
        }
        let Some(&k_top) = ks.iter().max() else { continue };
        let sets = query_batch(&index, &data.batch(&test, local), k_top)?;
        let mut err = vec![0.0; k_top];
        for (ns, &y) in sets.iter().zip(&y_test) {
            let mut acc = WeightedSum::default();
            for (j, (&d, &l)) in ns.distances.iter().zip(&ns.labels).enumerate() {
                acc.push(d, l, weighting);
                err[j] += (acc.value(weighting) - y).abs();
            }
        }
        for k in ks {
            cells.push(KSweepCell { k, train_size: train.len(), mae: err[k - 1] / test.len() as f64 });
        }
    }
    Ok(cells)
}

/// Empirical coverage of the neighbour-label quantiles on the first CV
/// fold, with the whole training part as the reference set.
pub fn run_calibration(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Vec<CalibrationPoint>> {
    cfg.validate()?;
    let plan = make_folds(data.len(), cfg.k_cv, cfg.seed)?;
    let test = plan.test_indices(0);
    let train = plan.train_indices(0);
    let seed = fold_seed(cfg.seed, 0);
    let mut log = StageLog::default();
    let (metric, local, _, _) = knn_metric(cfg.k_sweep.model, data, &train, cfg, seed, &mut log)?;
    let index = build_index(&data.batch(&train, local), &data.labels_at(&train), &metric)?;
    let k = cfg.calibration.k.min(train.len());
    let levels = &cfg.calibration.levels;
    let predicted = query_batch(&index, &data.batch(&test, local), k)?
        .iter()
        .map(|ns| predict_quantiles(ns, levels))
        .collect::<Result<Vec<_>>>()?;
    calibration_curve(&predicted, &data.labels_at(&test), levels)
}

/// Leave-one-out k selection for one k-NN model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneKReport {
    pub model: String,
    pub n_items: usize,
    pub k_best: usize,
    /// Leave-one-out MAE for `k = 1..` (entry `k - 1`).
    pub loo_mae: Vec<f64>,
}

/// Leave-one-out MAE curve of every configured k-NN model on a seeded
/// subsample of at most `knn.k_search_cap` items.
pub fn run_tune_k(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Vec<TuneKReport>> {
    cfg.validate()?;
    let kinds: Vec<ModelKind> = cfg.models.iter().copied().filter(|m| m.is_knn()).collect();
    if kinds.is_empty() {
        return Err(Error::config("k tuning needs at least one k-NN model"));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let m = data.len().min(cfg.knn.k_search_cap);
    if m < 2 {
        return Err(Error::config("k tuning needs at least two items"));
    }
    let items = subsample(&all, m, cfg.seed)?;
    kinds
        .into_iter()
        .map(|kind| {
            let mut log = StageLog::default();
            let (metric, local, _, _) = knn_metric(kind, data, &items, cfg, cfg.seed, &mut log)?;
            let index = build_index(&data.batch(&items, local), &data.labels_at(&items), &metric)?;
            let r = tune_k_on_index(&index, cfg.knn.k_max.min(m - 1), cfg.knn.weighting)?;
            Ok(TuneKReport { model: kind.name().into(), n_items: m, k_best: r.k_best, loo_mae: r.loo_mae })
        })
        .collect()
}
