//! Metric learning for kernel regression.
//!
//! Learns a linear map `A` (`p_out × p_in`) so that leave-one-out
//! Nadaraya–Watson regression with weights `exp(-‖A(x_i - x_j)‖²)` fits the
//! labels well. The kernel width is fixed to 1; its role is played by the
//! scale of `A`.
//!
//! Loss: `L = Σ_i (ŷ_i - y_i)²` with `ŷ_i = Σ_{j≠i} k_ij y_j / Σ_{j≠i} k_ij`.
//!
//! Gradient: with `p_ij = k_ij / Σ_{l≠i} k_il`, `z = A x` and
//! `c_ij = 4 (ŷ_i - y_i) p_ij (ŷ_i - y_j)`,
//!
//! ```text
//! ∂L/∂A = Σ_i Σ_{j≠i} c_ij (z_i - z_j)(x_i - x_j)ᵀ
//! ```
//!
//! which is accumulated per anchor row in `O(n (p_in + p_out))` using the
//! row sums of `c`, so a full pass costs `O(n² (p_in + p_out))`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::subsample;
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::linalg::symmetric_eigen;
use crate::matrix::{squared_euclidean, Matrix};
use crate::par;

/// Anchor rows per parallel work item. Fixed so results do not depend on
/// the thread count.
const ANCHOR_CHUNK: usize = 64;
const STD_FLOOR: f64 = 1e-12;
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const GROW: f64 = 2.0;
const MAX_BACKTRACKS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    GradientDescentBacktracking,
    AdaptiveMoment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlkrConfig {
    pub p_out: usize,
    pub max_train_points: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Above this many points each step uses a random batch of anchor rows.
    pub minibatch_threshold: usize,
    pub batch_size: usize,
    /// Full-pass loss is recorded every this many steps in mini-batch mode.
    pub trace_every: usize,
    /// Step size of the adaptive-moment optimizer.
    pub learning_rate: f64,
}

impl Default for MlkrConfig {
    fn default() -> Self {
        MlkrConfig {
            p_out: 50,
            max_train_points: 25_000,
            max_iter: 40,
            grad_tol: 1e-6,
            seed: 0,
            optimizer: Optimizer::GradientDescentBacktracking,
            minibatch_threshold: 5_000,
            batch_size: 1_000,
            trace_every: 25,
            learning_rate: 0.05,
        }
    }
}

impl MlkrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_out == 0 {
            return Err(Error::config("p_out must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        if self.max_train_points < 2 || self.batch_size == 0 || self.trace_every == 0 {
            return Err(Error::config("max_train_points ≥ 2, batch_size ≥ 1 and trace_every ≥ 1 required"));
        }
        if !(self.grad_tol >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::config("grad_tol must be nonnegative and learning_rate positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub loss: f64,
}

/// A learned metric. `matrix` acts on standardized inputs
/// `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlkrTransform {
    pub matrix: Matrix,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub training_fingerprint: String,
    pub objective_trace: Vec<TracePoint>,
    pub iterations: usize,
    pub n_fit: usize,
}

impl MlkrTransform {
    /// A transform applying `matrix` directly, without standardization.
    pub fn from_matrix(matrix: Matrix) -> Self {
        let p_in = matrix.cols();
        MlkrTransform {
            matrix,
            mean: vec![0.0; p_in],
            std: vec![1.0; p_in],
            training_fingerprint: String::new(),
            objective_trace: Vec::new(),
            iterations: 0,
            n_fit: 0,
        }
    }

    pub fn p_in(&self) -> usize {
        self.matrix.cols()
    }

    pub fn p_out(&self) -> usize {
        self.matrix.rows()
    }

    /// `A · diag(1/std)`: the map from raw inputs (after centring).
    pub fn effective_matrix(&self) -> Matrix {
        let mut m = self.matrix.clone();
        let p_in = self.p_in();
        for r in 0..m.rows() {
            let row = m.row_mut(r);
            for c in 0..p_in {
                row[c] /= self.std[c];
            }
        }
        m
    }

    /// Maps every row of `x` to `A (x - mean) / std`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.p_in() {
            return Err(Error::shape(format!(
                "transform expects {} features, got {}",
                self.p_in(),
                x.cols()
            )));
        }
        let (p_in, p_out) = (self.p_in(), self.p_out());
        let mut out = Matrix::zeros(x.rows(), p_out);
        par::for_each_row_mut(out.as_mut_slice(), p_out, |i, o| {
            let src = x.row(i);
            let z: Vec<f64> = (0..p_in).map(|c| (src[c] - self.mean[c]) / self.std[c]).collect();
            for (r, v) in o.iter_mut().enumerate() {
                *v = self.matrix.row(r).iter().zip(&z).map(|(a, b)| a * b).sum();
            }
        });
        Ok(out)
    }
}

pub fn transform(t: &MlkrTransform, x: &Matrix) -> Result<Matrix> {
    t.transform(x)
}

fn check_inputs(a: &Matrix, x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() < 2 {
        return Err(Error::config("metric learning needs at least 2 points"));
    }
    if y.len() != x.rows() {
        return Err(Error::shape(format!("{} points with {} labels", x.rows(), y.len())));
    }
    if a.cols() != x.cols() {
        return Err(Error::shape(format!(
            "transform has {} input columns, data has {}",
            a.cols(),
            x.cols()
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("metric learning inputs must be finite"));
    }
    Ok(())
}

/// Rows of `x` mapped by `a`: `Z = X Aᵀ`.
fn project(a: &Matrix, x: &Matrix) -> Matrix {
    let p_out = a.rows();
    let mut z = Matrix::zeros(x.rows(), p_out);
    par::for_each_row_mut(z.as_mut_slice(), p_out, |i, o| {
        let xi = x.row(i);
        for (r, v) in o.iter_mut().enumerate() {
            *v = a.row(r).iter().zip(xi).map(|(p, q)| p * q).sum();
        }
    });
    z
}

/// Leave-one-out weights of anchor `i`, shifted so the largest is 1. Entry
/// `i` is zero. The shift keeps the normalizer ≥ 1, so a point far from all
/// others falls back to its nearest neighbours instead of 0/0.
fn loo_weights(z: &Matrix, i: usize, w: &mut [f64]) -> f64 {
    let zi = z.row(i);
    let mut dmin = f64::INFINITY;
    for (j, wj) in w.iter_mut().enumerate() {
        if j == i {
            *wj = f64::INFINITY;
            continue;
        }
        let d = squared_euclidean(zi, z.row(j));
        *wj = d;
        dmin = dmin.min(d);
    }
    let mut total = 0.0;
    for wj in w.iter_mut() {
        *wj = (-(*wj - dmin)).exp();
        total += *wj;
    }
    total
}

/// `ŷ_i - y_i`, computed relative to `y_i` so constant labels give exactly 0.
fn loo_residual(w: &[f64], total: f64, y: &[f64], i: usize) -> f64 {
    let yi = y[i];
    w.iter().zip(y).map(|(wj, yj)| wj * (yj - yi)).sum::<f64>() / total
}

struct Pass {
    loss: f64,
    grad: Option<Matrix>,
}

/// Loss (and optionally gradient) summed over `anchors`, or all rows.
fn evaluate(a: &Matrix, x: &Matrix, y: &[f64], anchors: Option<&[usize]>, want_grad: bool) -> Pass {
    let n = x.rows();
    let (p_out, p_in) = (a.rows(), a.cols());
    let z = project(a, x);
    let all: Vec<usize>;
    let anchors = match anchors {
        Some(s) => s,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    struct Partial {
        loss: f64,
        g: Vec<f64>,
        s: Vec<f64>,
    }
    let partials = par::map_chunks(anchors.len(), ANCHOR_CHUNK, |range| {
        let mut part = Partial {
            loss: 0.0,
            g: if want_grad { vec![0.0; p_out * p_in] } else { Vec::new() },
            s: if want_grad { vec![0.0; n] } else { Vec::new() },
        };
        let mut w = vec![0.0; n];
        let mut u = vec![0.0; p_in];
        let mut v = vec![0.0; p_out];
        for &i in &anchors[range] {
            let total = loo_weights(&z, i, &mut w);
            let r = loo_residual(&w, total, y, i);
            part.loss += r * r;
            if !want_grad || r == 0.0 {
                continue;
            }
            u.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            let mut rc = 0.0;
            for j in 0..n {
                if w[j] == 0.0 {
                    continue;
                }
                // ŷ_i - y_j = r + (y_i - y_j)
                let c = 4.0 * r * (w[j] / total) * (r + (y[i] - y[j]));
                rc += c;
                part.s[j] += c;
                for (ue, xe) in u.iter_mut().zip(x.row(j)) {
                    *ue += c * xe;
                }
                for (ve, ze) in v.iter_mut().zip(z.row(j)) {
                    *ve += c * ze;
                }
            }
            let (xi, zi) = (x.row(i), z.row(i));
            for o in 0..p_out {
                let left = rc * zi[o] - v[o];
                let g = &mut part.g[o * p_in..(o + 1) * p_in];
                for c in 0..p_in {
                    g[c] += left * xi[c] - zi[o] * u[c];
                }
            }
        }
        part
    });
    let mut loss = 0.0;
    let mut g = vec![0.0; if want_grad { p_out * p_in } else { 0 }];
    let mut s = vec![0.0; if want_grad { n } else { 0 }];
    for p in partials {
        loss += p.loss;
        if want_grad {
            g.iter_mut().zip(&p.g).for_each(|(a, b)| *a += b);
            s.iter_mut().zip(&p.s).for_each(|(a, b)| *a += b);
        }
    }
    let grad = want_grad.then(|| {
        for (k, &sk) in s.iter().enumerate() {
            if sk == 0.0 {
                continue;
            }
            let (xk, zk) = (x.row(k), z.row(k));
            for o in 0..p_out {
                let f = sk * zk[o];
                let row = &mut g[o * p_in..(o + 1) * p_in];
                for c in 0..p_in {
                    row[c] += f * xk[c];
                }
            }
        }
        Matrix::from_vec(p_out, p_in, g).expect("gradient shape")
    });
    Pass { loss, grad }
}

/// Leave-one-out kernel-regression squared error under `a`.
pub fn mlkr_loss(a: &Matrix, x: &Matrix, y: &[f64]) -> Result<f64> {
    check_inputs(a, x, y)?;
    Ok(evaluate(a, x, y, None, false).loss)
}

/// `∂L/∂A`, same shape as `a`.
pub fn mlkr_gradient(a: &Matrix, x: &Matrix, y: &[f64]) -> Result<Matrix> {
    check_inputs(a, x, y)?;
    Ok(evaluate(a, x, y, None, true).grad.expect("requested"))
}

pub fn mlkr_loss_and_gradient(a: &Matrix, x: &Matrix, y: &[f64]) -> Result<(f64, Matrix)> {
    check_inputs(a, x, y)?;
    let p = evaluate(a, x, y, None, true);
    Ok((p.loss, p.grad.expect("requested")))
}

fn standardize(x: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (n, p) = (x.rows(), x.cols());
    let mut mean = vec![0.0; p];
    for row in x.row_iter() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; p];
    for row in x.row_iter() {
        for c in 0..p {
            var[c] += (row[c] - mean[c]).powi(2);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt().max(STD_FLOOR)).collect();
    let xs = Matrix::from_fn(n, p, |i, c| (x[(i, c)] - mean[c]) / std[c]);
    (xs, mean, std)
}

/// Top-`p_out` principal directions of standardized data (identity when
/// `p_out == p_in`), scaled so that a point's nearest neighbour sits at
/// squared distance ≈ 1.
fn initial_matrix(xs: &Matrix, p_out: usize, seed: u64) -> Result<Matrix> {
    let (n, p_in) = (xs.rows(), xs.cols());
    let mut a = if p_out == p_in {
        Matrix::identity(p_in)
    } else {
        let mut cov = Matrix::zeros(p_in, p_in);
        for row in xs.row_iter() {
            for r in 0..p_in {
                let c_row = cov.row_mut(r);
                for c in 0..p_in {
                    c_row[c] += row[r] * row[c];
                }
            }
        }
        cov.scale(1.0 / n as f64);
        let (_, vecs) = symmetric_eigen(&cov)?;
        // Eigenvalues ascend; take the last p_out columns, largest first.
        Matrix::from_fn(p_out, p_in, |r, c| vecs[(c, p_in - 1 - r)])
    };
    let z = project(&a, xs);
    let mut probe: Vec<usize> = (0..n).collect();
    probe.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    probe.truncate(500);
    let nn: Vec<f64> = par::map_slice(&probe, |&i| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| squared_euclidean(z.row(i), z.row(j)))
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min)
    });
    let finite: Vec<f64> = nn.into_iter().filter(|d| d.is_finite()).collect();
    if !finite.is_empty() {
        let mean_nn = finite.iter().sum::<f64>() / finite.len() as f64;
        if mean_nn > 0.0 {
            a.scale(1.0 / mean_nn.sqrt());
        }
    }
    Ok(a)
}

fn frob_dot(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn step(a: &Matrix, d: &Matrix, t: f64) -> Matrix {
    let data = a.as_slice().iter().zip(d.as_slice()).map(|(x, g)| x - t * g).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

/// Fits a transform on `x` (`n × p_in`) and labels `y`.
///
/// Inputs are standardized per feature first. When `n` exceeds
/// `max_train_points` a seeded random subsample is used. With at most
/// `minibatch_threshold` points every step is a full-batch gradient step
/// with Armijo backtracking and the recorded trace is non-increasing; above
/// it, steps use random anchor batches and the trace holds periodic
/// full-pass losses.
pub fn mlkr_fit(x: &Matrix, y: &[f64], config: &MlkrConfig) -> Result<MlkrTransform> {
    config.validate()?;
    let a_probe = Matrix::zeros(1, x.cols());
    check_inputs(&a_probe, x, y)?;
    let (x_fit, y_fit) = if x.rows() > config.max_train_points {
        let pool: Vec<usize> = (0..x.rows()).collect();
        let mut idx = subsample(&pool, config.max_train_points, config.seed)?;
        idx.sort_unstable();
        (x.select_rows(&idx), idx.iter().map(|&i| y[i]).collect::<Vec<_>>())
    } else {
        (x.clone(), y.to_vec())
    };
    let n = x_fit.rows();
    let p_in = x_fit.cols();
    let p_out = if config.p_out > p_in {
        log::warn!("p_out = {} exceeds the input dimension {p_in}; using {p_in}", config.p_out);
        p_in
    } else {
        config.p_out
    };
    let training_fingerprint = fingerprint::of_json(&(
        fingerprint::of_floats([x_fit.as_slice(), y_fit.as_slice()]),
        config,
    ));
    let (xs, mean, std) = standardize(&x_fit);
    let mut a = initial_matrix(&xs, p_out, config.seed)?;

    let minibatch = n > config.minibatch_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut next_batch = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut b = Vec::with_capacity(config.batch_size);
        while b.len() < config.batch_size.min(n) {
            if cursor == n {
                order.shuffle(rng);
                cursor = 0;
            }
            b.push(order[cursor]);
            cursor += 1;
        }
        b.sort_unstable();
        b
    };

    let full = evaluate(&a, &xs, &y_fit, None, !minibatch);
    if !full.loss.is_finite() {
        return Err(Error::numerical("metric-learning loss is not finite at initialization"));
    }
    let mut trace = vec![TracePoint { iteration: 0, loss: full.loss }];
    let mut cached = (!minibatch).then(|| (full.loss, full.grad.expect("requested")));
    let mut t_step: Option<f64> = None;
    let mut adam_m = Matrix::zeros(p_out, p_in);
    let mut adam_v = Matrix::zeros(p_out, p_in);
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        let batch = minibatch.then(|| next_batch(&mut rng));
        let (loss, grad) = match (&cached, &batch) {
            (Some((l, g)), None) => (*l, g.clone()),
            _ => {
                let p = evaluate(&a, &xs, &y_fit, batch.as_deref(), true);
                (p.loss, p.grad.expect("requested"))
            }
        };
        let g_inf = grad.max_abs();
        if g_inf <= config.grad_tol {
            break;
        }
        let dir = match config.optimizer {
            Optimizer::GradientDescentBacktracking => grad.clone(),
            Optimizer::AdaptiveMoment => {
                let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
                let tt = it as i32;
                let mut d = Matrix::zeros(p_out, p_in);
                for k in 0..p_out * p_in {
                    let g = grad.as_slice()[k];
                    let m = b1 * adam_m.as_slice()[k] + (1.0 - b1) * g;
                    let v = b2 * adam_v.as_slice()[k] + (1.0 - b2) * g * g;
                    adam_m.as_mut_slice()[k] = m;
                    adam_v.as_mut_slice()[k] = v;
                    let mh = m / (1.0 - b1.powi(tt));
                    let vh = v / (1.0 - b2.powi(tt));
                    d.as_mut_slice()[k] = mh / (vh.sqrt() + eps);
                }
                if frob_dot(&grad, &d) > 0.0 {
                    d
                } else {
                    grad.clone()
                }
            }
        };
        let slope = frob_dot(&grad, &dir);
        let mut t = match (config.optimizer, t_step) {
            (_, Some(t)) => t,
            (Optimizer::AdaptiveMoment, None) => config.learning_rate,
            (Optimizer::GradientDescentBacktracking, None) => {
                let a_norm = a.frobenius_norm_sq().sqrt().max(1e-12);
                0.1 * a_norm / dir.frobenius_norm_sq().sqrt()
            }
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = step(&a, &dir, t);
            let l = evaluate(&cand, &xs, &y_fit, batch.as_deref(), false).loss;
            if l.is_finite() && l <= loss - ARMIJO_C * t * slope {
                accepted = Some((cand, l));
                break;
            }
            t *= SHRINK;
        }
        let Some((cand, l)) = accepted else {
            log::info!("line search stalled at iteration {it}");
            break;
        };
        a = cand;
        iterations = it;
        t_step = Some(match config.optimizer {
            Optimizer::GradientDescentBacktracking => t * GROW,
            Optimizer::AdaptiveMoment => (t * GROW).min(config.learning_rate),
        });
        if minibatch {
            if it % config.trace_every == 0 || it == config.max_iter {
                trace.push(TracePoint {
                    iteration: it,
                    loss: evaluate(&a, &xs, &y_fit, None, false).loss,
                });
            }
        } else {
            trace.push(TracePoint { iteration: it, loss: l });
            if it < config.max_iter {
                let p = evaluate(&a, &xs, &y_fit, None, true);
                cached = Some((p.loss, p.grad.expect("requested")));
            }
        }
    }
    if minibatch && trace.last().is_some_and(|p| p.iteration != iterations) {
        trace.push(TracePoint {
            iteration: iterations,
            loss: evaluate(&a, &xs, &y_fit, None, false).loss,
        });
    }
    Ok(MlkrTransform {
        matrix: a,
        mean,
        std,
        training_fingerprint,
        objective_trace: trace,
        iterations,
        n_fit: n,
    })
}

/// Nadaraya–Watson regression in the learned space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlkrRegressor {
    pub transform: MlkrTransform,
    pub train_points: Matrix,
    pub labels: Vec<f64>,
}

impl MlkrRegressor {
    pub fn new(transform: MlkrTransform, x: &Matrix, y: &[f64]) -> Result<Self> {
        if x.rows() != y.len() || x.rows() == 0 {
            return Err(Error::shape(format!("{} points with {} labels", x.rows(), y.len())));
        }
        let train_points = transform.transform(x)?;
        Ok(MlkrRegressor {
            transform,
            train_points,
            labels: y.to_vec(),
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let z = self.transform.transform(x)?;
        Ok(par::map_range(z.rows(), |q| {
            let zq = z.row(q);
            let d: Vec<f64> = self.train_points.row_iter().map(|r| squared_euclidean(zq, r)).collect();
            let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
            let (mut num, mut den) = (0.0, 0.0);
            for (dj, yj) in d.iter().zip(&self.labels) {
                let w = (-(dj - dmin)).exp();
                num += w * yj;
                den += w;
            }
            num / den
        }))
    }
}

#[derive(Serialize, Deserialize)]
struct TransformMetadata {
    p_in: usize,
    p_out: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    training_fingerprint: String,
    iterations: usize,
    n_fit: usize,
    objective_trace: Vec<TracePoint>,
}

pub fn metadata_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the transform as a binary file plus a JSON metadata file
/// (`<path>.json`) for inspection. Loading reads the binary only.
pub fn save_transform(t: &MlkrTransform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    bincode::serialize_into(BufWriter::new(file), t)?;
    let meta = TransformMetadata {
        p_in: t.p_in(),
        p_out: t.p_out(),
        mean: t.mean.clone(),
        std: t.std.clone(),
        training_fingerprint: t.training_fingerprint.clone(),
        iterations: t.iterations,
        n_fit: t.n_fit,
        objective_trace: t.objective_trace.clone(),
    };
    let mp = metadata_path(path);
    let file = fs::File::create(&mp).map_err(|e| Error::io(&mp, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &meta)?;
    Ok(())
}

pub fn load_transform(path: impl AsRef<Path>) -> Result<MlkrTransform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bincode::deserialize(&bytes)?)
}

/// `iteration,loss` rows.
pub fn write_trace_csv(t: &MlkrTransform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "iteration,loss").map_err(|e| Error::io(path, e))?;
    for p in &t.objective_trace {
        writeln!(w, "{},{}", p.iteration, p.loss).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
