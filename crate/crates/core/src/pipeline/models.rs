//! Fitting and applying the five model families on an index subset.
//!
//! Hyperparameter search runs inside the training subset only. Every stage
//! that looks at training items records their positions in a [`StageLog`] so
//! the experiment runner can prove that no test item was touched.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, KrrKernelChoice, ModelKind};
use super::data::ExperimentData;
use crate::dataset::subsample;
use crate::descriptors::DescriptorBatch;
use crate::error::{Error, Result};
use crate::kernels::KernelParams;
use crate::knn::{build_index, tune_k_on_index, KnnModel, MetricSpec, DEFAULT_K};
use crate::krr::{krr_grid_search, KrrModel, DEFAULT_GLOBAL_SIGMAS, DEFAULT_LAMBDAS, DEFAULT_LOCAL_SIGMAS};
use crate::matrix::euclidean;
use crate::mlkr::{mlkr_fit, MlkrRegressor, MlkrTransform};
use crate::timing::capture_timing;

/// Positions of the items each training stage used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stages: Vec<(String, Vec<usize>)>,
}

impl StageLog {
    pub fn record(&mut self, stage: &str, idx: &[usize]) {
        self.stages.push((stage.to_string(), idx.to_vec()));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Krr { model: KrrModel, local: bool },
    Knn { model: KnnModel, local: bool },
    KernelRegression(MlkrRegressor),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub model: TrainedModel,
    /// Chosen hyperparameters, as JSON.
    pub hyperparameters: serde_json::Value,
    /// CPU seconds of the final fit (hyperparameter search excluded).
    pub train_cpu_s: f64,
}

impl FittedModel {
    fn wants_local(&self) -> bool {
        match &self.model {
            TrainedModel::Krr { local, .. } | TrainedModel::Knn { local, .. } => *local,
            TrainedModel::KernelRegression(_) => false,
        }
    }

    /// Predictions for items `idx` of `data`, with the CPU seconds spent.
    pub fn predict(&self, data: &ExperimentData, idx: &[usize]) -> Result<(Vec<f64>, f64)> {
        let batch = data.batch(idx, self.wants_local());
        self.predict_batch(&batch)
    }

    pub fn predict_batch(&self, batch: &DescriptorBatch) -> Result<(Vec<f64>, f64)> {
        let (out, cpu) = capture_timing(|| match (&self.model, batch) {
            (TrainedModel::Krr { model, .. }, b) => model.predict(b),
            (TrainedModel::Knn { model, .. }, b) => model.predict(b),
            (TrainedModel::KernelRegression(m), DescriptorBatch::Global(x)) => m.predict(x),
            (TrainedModel::KernelRegression(_), DescriptorBatch::Local(_)) => {
                Err(Error::config("kernel regression on the learned metric needs global vectors"))
            }
        });
        Ok((out?, cpu))
    }

    pub fn knn(&self) -> Option<&KnnModel> {
        match &self.model {
            TrainedModel::Knn { model, .. } => Some(model),
            _ => None,
        }
    }
}

fn shuffled(idx: &[usize], seed: u64) -> Vec<usize> {
    let mut v = idx.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

fn fit_krr(data: &ExperimentData, train: &[usize], cfg: &ExperimentConfig, seed: u64, log: &mut StageLog) -> Result<FittedModel> {
    let local = match cfg.krr.kernel {
        KrrKernelChoice::Auto => data.has_local(),
        KrrKernelChoice::Global => false,
        KrrKernelChoice::Local if data.has_local() => true,
        KrrKernelChoice::Local => return Err(Error::config("the local KRR kernel needs per-atom descriptors")),
    };
    let base = if local { KernelParams::local(1.0) } else { KernelParams::global(1.0) };
    let sigma_grid = cfg.krr.sigma_grid.clone().unwrap_or_else(|| {
        if local { DEFAULT_LOCAL_SIGMAS.to_vec() } else { DEFAULT_GLOBAL_SIGMAS.to_vec() }
    });
    let lambda_grid = cfg.krr.lambda_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let (sigma, lambda, searched) = match (cfg.krr.sigma, cfg.krr.lambda) {
        (Some(s), Some(l)) => (s, l, false),
        _ => {
            let order = shuffled(train, seed ^ 0x6b72);
            let n = order.len();
            let n_fit = cfg.krr.grid_train.min((n * 4).div_ceil(5)).min(n.saturating_sub(1));
            let n_val = cfg.krr.grid_validation.min(n - n_fit);
            if n_fit == 0 || n_val == 0 {
                (sigma_grid[sigma_grid.len() / 2], lambda_grid[0], false)
            } else {
                let (fit_idx, val_idx) = (&order[..n_fit], &order[n_fit..n_fit + n_val]);
                log.record("krr_grid_train", fit_idx);
                log.record("krr_grid_validation", val_idx);
                let sigmas = cfg.krr.sigma.map_or(sigma_grid.clone(), |s| vec![s]);
                let lambdas = cfg.krr.lambda.map_or(lambda_grid.clone(), |l| vec![l]);
                let g = krr_grid_search(
                    &data.batch(fit_idx, local),
                    &data.labels_at(fit_idx),
                    &data.batch(val_idx, local),
                    &data.labels_at(val_idx),
                    base,
                    &sigmas,
                    &lambdas,
                )?;
                (g.sigma, g.lambda, true)
            }
        }
    };
    log.record("krr_fit", train);
    let params = KernelParams { sigma, ..base };
    let model = KrrModel::fit(data.batch(train, local), &data.labels_at(train), params, lambda)?;
    Ok(FittedModel {
        kind: ModelKind::Krr,
        hyperparameters: json!({
            "kernel": if local { "local" } else { "global" },
            "sigma": sigma,
            "lambda": lambda,
            "lambda_used": model.lambda_used,
            "grid_searched": searched,
        }),
        train_cpu_s: model.train_time_cpu_s,
        model: TrainedModel::Krr { model, local },
    })
}

/// Median pairwise distance over a seeded sample of training items (atom
/// rows for local descriptors).
fn median_distance(batch: &DescriptorBatch, seed: u64) -> f64 {
    let rows: Vec<Vec<f64>> = match batch {
        DescriptorBatch::Global(m) => m.row_iter().map(<[f64]>::to_vec).collect(),
        DescriptorBatch::Local(v) => v.iter().flat_map(|d| d.rows.row_iter().map(<[f64]>::to_vec)).collect(),
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    let sample = shuffled(&all, seed ^ 0x51);
    let sample = &sample[..sample.len().min(200)];
    let mut d: Vec<f64> = Vec::new();
    for (a, &i) in sample.iter().enumerate() {
        for &j in &sample[..a] {
            d.push(euclidean(&rows[i], &rows[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// The metric a k-NN family uses, plus the CPU seconds spent learning it.
pub(crate) fn knn_metric(
    kind: ModelKind,
    data: &ExperimentData,
    train: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
    log: &mut StageLog,
) -> Result<(MetricSpec, bool, f64, serde_json::Value)> {
    match kind {
        ModelKind::KnnEuclidean => Ok((MetricSpec::Euclidean, false, 0.0, json!({}))),
        ModelKind::KnnKernelInduced => {
            let local = cfg.knn.kernel_local && data.has_local();
            let batch = data.batch(train, local);
            let sigma = cfg.knn.kernel_sigma.unwrap_or_else(|| median_distance(&batch, seed));
            let base = if local { KernelParams::local(sigma) } else { KernelParams::global(sigma) };
            let params = KernelParams { normalize: cfg.knn.kernel_normalize, ..base };
            log.record("kernel_width", train);
            Ok((
                MetricSpec::KernelInduced(params),
                local,
                0.0,
                json!({"kernel_sigma": sigma, "kernel_local": local, "kernel_normalize": params.normalize}),
            ))
        }
        ModelKind::KnnMlkr => {
            let (t, cpu) = fit_transform(data, train, cfg, seed, log)?;
            let info = json!({"mlkr_iterations": t.iterations, "mlkr_p_out": t.p_out(), "mlkr_n_fit": t.n_fit});
            Ok((MetricSpec::Mahalanobis(t), false, cpu, info))
        }
        _ => Err(Error::config(format!("{kind} is not a k-NN model"))),
    }
}

fn fit_transform(
    data: &ExperimentData,
    train: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
    log: &mut StageLog,
) -> Result<(MlkrTransform, f64)> {
    log.record("mlkr_fit", train);
    let mlkr_cfg = crate::mlkr::MlkrConfig { seed, ..cfg.mlkr.clone() };
    let x = data.global.select_rows(train);
    let y = data.labels_at(train);
    let (t, cpu) = capture_timing(|| mlkr_fit(&x, &y, &mlkr_cfg));
    Ok((t?, cpu))
}

fn fit_knn(
    kind: ModelKind,
    data: &ExperimentData,
    train: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
    log: &mut StageLog,
) -> Result<FittedModel> {
    let (metric, local, metric_cpu, mut info) = knn_metric(kind, data, train, cfg, seed, log)?;
    let k = match cfg.knn.k {
        Some(k) => k,
        None if train.len() < 2 => DEFAULT_K.min(train.len().max(1)),
        None => {
            let m = train.len().min(cfg.knn.k_search_cap);
            let sub = subsample(train, m, seed ^ 0x4b)?;
            log.record("k_search", &sub);
            let index = build_index(&data.batch(&sub, local), &data.labels_at(&sub), &metric)?;
            tune_k_on_index(&index, cfg.knn.k_max.min(m - 1), cfg.knn.weighting)?.k_best
        }
    };
    log.record("index", train);
    let index = build_index(&data.batch(train, local), &data.labels_at(train), &metric)?;
    let train_cpu_s = metric_cpu + index.build_time_cpu_s;
    let extra = json!({
        "k": k,
        "weighting": cfg.knn.weighting,
        "metric": metric.name(),
        "backend": index.backend.name(),
    });
    if let (Some(obj), serde_json::Value::Object(e)) = (info.as_object_mut(), extra) {
        obj.extend(e);
    }
    Ok(FittedModel {
        kind,
        model: TrainedModel::Knn {
            model: KnnModel::new(index, k, cfg.knn.weighting)?,
            local,
        },
        hyperparameters: info,
        train_cpu_s,
    })
}

fn fit_kernel_regression(
    data: &ExperimentData,
    train: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
    log: &mut StageLog,
) -> Result<FittedModel> {
    let (t, cpu) = fit_transform(data, train, cfg, seed, log)?;
    let info = json!({"mlkr_iterations": t.iterations, "mlkr_p_out": t.p_out(), "mlkr_n_fit": t.n_fit});
    let x = data.global.select_rows(train);
    let (reg, cpu2) = capture_timing(|| MlkrRegressor::new(t, &x, &data.labels_at(train)));
    Ok(FittedModel {
        kind: ModelKind::KernelRegressionMlkr,
        model: TrainedModel::KernelRegression(reg?),
        hyperparameters: info,
        train_cpu_s: cpu + cpu2,
    })
}

/// Fits `kind` on items `train` of `data`.
pub fn fit_model(
    kind: ModelKind,
    data: &ExperimentData,
    train: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
    log: &mut StageLog,
) -> Result<FittedModel> {
    if train.is_empty() {
        return Err(Error::config("cannot fit a model on zero training items"));
    }
    match kind {
        ModelKind::Krr => fit_krr(data, train, cfg, seed, log),
        ModelKind::KernelRegressionMlkr => fit_kernel_regression(data, train, cfg, seed, log),
        _ => fit_knn(kind, data, train, cfg, seed, log),
    }
}
