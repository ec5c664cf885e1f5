//! Kernel ridge regression.

use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorBatch;
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, kernel_matrix, KernelParams};
use crate::linalg::Cholesky;
use crate::matrix::Matrix;
use crate::timing::capture_timing;

/// Relative residual demanded of every solve, `‖(K+λI)α − y‖∞ / ‖y‖∞`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
const MAX_JITTER_RETRIES: usize = 3;
const REFINEMENT_STEPS: usize = 2;
const PREDICT_CHUNK: usize = 256;

pub const DEFAULT_GLOBAL_SIGMAS: [f64; 11] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];
pub const DEFAULT_LOCAL_SIGMAS: [f64; 8] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
pub const DEFAULT_LAMBDAS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Weights of a solved ridge system.
#[derive(Clone, Debug, PartialEq)]
pub struct KrrSolution {
    pub alpha: Vec<f64>,
    /// Ridge actually applied; larger than requested after jitter retries.
    pub lambda_used: f64,
    pub relative_residual: f64,
}

fn residual_inf(k: &Matrix, lambda: f64, alpha: &[f64], y: &[f64]) -> Vec<f64> {
    k.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let kx: f64 = row.iter().zip(alpha).map(|(a, b)| a * b).sum();
            y[i] - kx - lambda * alpha[i]
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve_once(k: &Matrix, y: &[f64], lambda: f64) -> Result<KrrSolution> {
    let chol = Cholesky::factor(k, lambda)?;
    let mut alpha = chol.solve(y)?;
    let scale = inf_norm(y).max(f64::MIN_POSITIVE);
    let mut r = residual_inf(k, lambda, &alpha, y);
    for _ in 0..REFINEMENT_STEPS {
        if inf_norm(&r) <= RESIDUAL_TOLERANCE * scale {
            break;
        }
        let delta = chol.solve(&r)?;
        for (a, d) in alpha.iter_mut().zip(&delta) {
            *a += d;
        }
        r = residual_inf(k, lambda, &alpha, y);
    }
    let relative_residual = inf_norm(&r) / scale;
    if !(relative_residual <= RESIDUAL_TOLERANCE) && inf_norm(y) > 0.0 {
        return Err(Error::numerical(format!(
            "ridge solve residual {relative_residual:e} exceeds {RESIDUAL_TOLERANCE:e} at λ = {lambda:e}"
        )));
    }
    Ok(KrrSolution {
        alpha,
        lambda_used: lambda,
        relative_residual,
    })
}

/// Solves `(K + λI) α = y` by Cholesky factorization.
///
/// When the factorization fails or the residual check does not pass, λ is
/// multiplied by 10 and the solve retried, up to three times. A zero λ is
/// first raised to `1e-12 × mean(diag K)`.
pub fn krr_train(k: &Matrix, y: &[f64], lambda: f64) -> Result<KrrSolution> {
    let n = k.rows();
    if k.cols() != n || y.len() != n {
        return Err(Error::shape(format!(
            "kernel matrix {}x{} with {} labels",
            k.rows(),
            k.cols(),
            y.len()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!("ridge parameter must be nonnegative, got {lambda}")));
    }
    let mut lam = lambda;
    let mut last_err = None;
    for attempt in 0..=MAX_JITTER_RETRIES {
        if attempt > 0 {
            lam = if lam == 0.0 {
                let mean_diag = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n.max(1) as f64;
                1e-12 * mean_diag.max(f64::MIN_POSITIVE)
            } else {
                lam * 10.0
            };
            log::warn!("ridge solve failed, retrying with λ = {lam:e}");
        }
        match solve_once(k, y, lam) {
            Ok(s) => return Ok(s),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::numerical(format!(
        "kernel ridge solve failed even at λ = {lam:e} ({}); use a larger λ",
        last_err.expect("at least one attempt")
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub alpha: Vec<f64>,
    pub kernel_params: KernelParams,
    pub lambda: f64,
    pub lambda_used: f64,
    pub train_descriptors: DescriptorBatch,
    pub train_time_cpu_s: f64,
}

impl KrrModel {
    /// Builds the kernel matrix, solves for α and records the CPU time of both.
    pub fn fit(x: DescriptorBatch, y: &[f64], params: KernelParams, lambda: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::shape(format!("{} descriptors with {} labels", x.len(), y.len())));
        }
        let (sol, t) = capture_timing(|| -> Result<KrrSolution> {
            let k = gram_matrix(&x, &params)?;
            krr_train(&k, y, lambda)
        });
        let sol = sol?;
        Ok(KrrModel {
            alpha: sol.alpha,
            kernel_params: params,
            lambda,
            lambda_used: sol.lambda_used,
            train_descriptors: x,
            train_time_cpu_s: t,
        })
    }

    pub fn n_train(&self) -> usize {
        self.alpha.len()
    }

    pub fn predict(&self, x: &DescriptorBatch) -> Result<Vec<f64>> {
        krr_predict(self, x)
    }
}

/// `K(x, train) · α`, evaluated in blocks of queries.
pub fn krr_predict(model: &KrrModel, x: &DescriptorBatch) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    let mut start = 0;
    while start < x.len() {
        let end = (start + PREDICT_CHUNK).min(x.len());
        let idx: Vec<usize> = (start..end).collect();
        let kx = kernel_matrix(&x.select(&idx), &model.train_descriptors, &model.kernel_params)?;
        out.extend(kx.mul_vec(&model.alpha)?);
        start = end;
    }
    Ok(out)
}

fn mae(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / y.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub sigma: f64,
    pub lambda: f64,
    /// `None` when the solve failed at this point.
    pub mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub sigma: f64,
    pub lambda: f64,
    pub mae: f64,
    pub table: Vec<GridPoint>,
}

/// Picks the `(σ, λ)` with the lowest validation MAE. Exact ties go to the
/// larger λ, then the larger σ.
pub fn krr_grid_search(
    train: &DescriptorBatch,
    y_train: &[f64],
    val: &DescriptorBatch,
    y_val: &[f64],
    base: KernelParams,
    sigma_grid: &[f64],
    lambda_grid: &[f64],
) -> Result<GridSearchResult> {
    if sigma_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::config("grid search needs nonempty σ and λ grids"));
    }
    if train.len() != y_train.len() || val.len() != y_val.len() {
        return Err(Error::shape("grid search descriptors and labels differ in length"));
    }
    let mut table = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for &sigma in sigma_grid {
        let params = KernelParams { sigma, ..base };
        let k = gram_matrix(train, &params)?;
        let kv = kernel_matrix(val, train, &params)?;
        for &lambda in lambda_grid {
            let m = match krr_train(&k, y_train, lambda) {
                Ok(sol) => Some(mae(&kv.mul_vec(&sol.alpha)?, y_val)),
                Err(e) => {
                    log::warn!("grid point σ = {sigma}, λ = {lambda:e} skipped: {e}");
                    None
                }
            };
            table.push(GridPoint { sigma, lambda, mae: m });
            if let Some(m) = m {
                let better = match best {
                    None => true,
                    Some((bm, bs, bl)) => {
                        m < bm || (m == bm && (lambda > bl || (lambda == bl && sigma > bs)))
                    }
                };
                if better {
                    best = Some((m, sigma, lambda));
                }
            }
        }
    }
    let (mae, sigma, lambda) = best.ok_or_else(|| Error::numerical("every grid point failed to solve"))?;
    Ok(GridSearchResult {
        sigma,
        lambda,
        mae,
        table,
    })
}
