//! Result tables: `results.csv`, `summary.json` and the `plotdata/` CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiments::{ExperimentRecord, KSweepCell};
use crate::error::{Error, Result};
use crate::knn::CalibrationPoint;

/// Aggregate over the folds of one (model, split, size).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub split: String,
    pub train_size: usize,
    pub n_runs: usize,
    pub mae_mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub mae_std: f64,
    /// `mean ± std`, for reading by eye.
    pub mae: String,
    pub train_cpu_s_mean: f64,
    pub train_cpu_s_std: f64,
    pub predict_cpu_s_mean: f64,
    pub predict_cpu_s_std: f64,
    pub n_test_mean: f64,
}

/// Files written by [`emit_results`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmittedFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plotdata: Vec<PathBuf>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per (model, split, size), in first-appearance order of the
/// model and split and ascending size.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut model_order: Vec<&str> = Vec::new();
    let mut split_order: Vec<&str> = Vec::new();
    for r in records {
        if !model_order.contains(&r.model.as_str()) {
            model_order.push(&r.model);
        }
        if !split_order.contains(&r.split.as_str()) {
            split_order.push(&r.split);
        }
    }
    let rank = |order: &[&str], s: &str| order.iter().position(|o| *o == s).unwrap_or(usize::MAX);
    let mut groups: BTreeMap<(usize, usize, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        let key = (rank(&model_order, &r.model), rank(&split_order, &r.split), r.train_size);
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let col = |f: fn(&ExperimentRecord) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (mae_mean, mae_std) = col(|r| r.mae);
            let (train_cpu_s_mean, train_cpu_s_std) = col(|r| r.train_cpu_s);
            let (predict_cpu_s_mean, predict_cpu_s_std) = col(|r| r.predict_cpu_s);
            SummaryRow {
                model: g[0].model.clone(),
                split: g[0].split.clone(),
                train_size: g[0].train_size,
                n_runs: g.len(),
                mae_mean,
                mae_std,
                mae: format!("{mae_mean:.4} ± {mae_std:.4}"),
                train_cpu_s_mean,
                train_cpu_s_std,
                predict_cpu_s_mean,
                predict_cpu_s_std,
                n_test_mean: col(|r| r.n_test as f64).0,
            }
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serialization(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_results_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    write_csv(path, records)
}

/// Reads back a `results.csv`; floats round-trip exactly.
pub fn load_results_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

#[derive(Serialize)]
struct LearningCurveRow<'a> {
    model: &'a str,
    split: &'a str,
    train_size: usize,
    n_runs: usize,
    mae_mean: f64,
    mae_std: f64,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    model: &'a str,
    split: &'a str,
    train_size: usize,
    n_runs: usize,
    train_cpu_s_mean: f64,
    train_cpu_s_std: f64,
    predict_cpu_s_mean: f64,
    predict_cpu_s_std: f64,
    predict_cpu_s_per_item: f64,
}

#[derive(Serialize)]
struct ExtrapolationRow<'a> {
    model: &'a str,
    train_size: usize,
    extrapolation_mae: f64,
    interpolation_mae: f64,
    ratio: f64,
}

/// Writes `results.csv`, `summary.json`, `plotdata/learning_curve.csv`,
/// `plotdata/timing.csv` and, when extrapolation records are present,
/// `plotdata/extrapolation.csv` under `out_dir`.
pub fn emit_results(records: &[ExperimentRecord], out_dir: &Path) -> Result<EmittedFiles> {
    if records.is_empty() {
        return Err(Error::config("no experiment records to write"));
    }
    let plot_dir = out_dir.join("plotdata");
    create_dir(&plot_dir)?;
    let results = out_dir.join("results.csv");
    write_results_csv(&results, records)?;

    let summary_rows = summarize(records);
    let summary = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&serde_json::json!({ "rows": summary_rows }))
        .map_err(|e| Error::Serialization(e.to_string()))?;
    fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;

    let mut plotdata = Vec::new();
    let lc: Vec<_> = summary_rows
        .iter()
        .map(|s| LearningCurveRow {
            model: &s.model,
            split: &s.split,
            train_size: s.train_size,
            n_runs: s.n_runs,
            mae_mean: s.mae_mean,
            mae_std: s.mae_std,
        })
        .collect();
    let path = plot_dir.join("learning_curve.csv");
    write_csv(&path, &lc)?;
    plotdata.push(path);

    let timing: Vec<_> = summary_rows
        .iter()
        .map(|s| TimingRow {
            model: &s.model,
            split: &s.split,
            train_size: s.train_size,
            n_runs: s.n_runs,
            train_cpu_s_mean: s.train_cpu_s_mean,
            train_cpu_s_std: s.train_cpu_s_std,
            predict_cpu_s_mean: s.predict_cpu_s_mean,
            predict_cpu_s_std: s.predict_cpu_s_std,
            predict_cpu_s_per_item: s.predict_cpu_s_mean / s.n_test_mean.max(1.0),
        })
        .collect();
    let path = plot_dir.join("timing.csv");
    write_csv(&path, &timing)?;
    plotdata.push(path);

    let extra: Vec<_> = summary_rows
        .iter()
        .filter(|s| s.split == "extrapolation")
        .filter_map(|e| {
            let i = summary_rows
                .iter()
                .find(|s| s.split == "interpolation" && s.model == e.model && s.train_size == e.train_size)?;
            Some(ExtrapolationRow {
                model: &e.model,
                train_size: e.train_size,
                extrapolation_mae: e.mae_mean,
                interpolation_mae: i.mae_mean,
                ratio: e.mae_mean / i.mae_mean,
            })
        })
        .collect();
    if !extra.is_empty() {
        let path = plot_dir.join("extrapolation.csv");
        write_csv(&path, &extra)?;
        plotdata.push(path);
    }
    Ok(EmittedFiles { results, summary, plotdata })
}

/// `plotdata/k_sweep.csv` under `out_dir`.
pub fn emit_k_sweep(cells: &[KSweepCell], out_dir: &Path) -> Result<PathBuf> {
    let dir = out_dir.join("plotdata");
    create_dir(&dir)?;
    let path = dir.join("k_sweep.csv");
    write_csv(&path, cells)?;
    Ok(path)
}

/// `plotdata/calibration.csv` under `out_dir`.
pub fn emit_calibration(points: &[CalibrationPoint], out_dir: &Path) -> Result<PathBuf> {
    let dir = out_dir.join("plotdata");
    create_dir(&dir)?;
    let path = dir.join("calibration.csv");
    write_csv(&path, points)?;
    Ok(path)
}
