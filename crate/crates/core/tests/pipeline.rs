//! End to end: XYZ files and a TOML config through featurization,
//! cross-validation, extrapolation and the result files.

use std::fs;
use std::path::Path;

use molknn::dataset::write_xyz;
use molknn::descriptors::{load_feature_table, save_feature_table};
use molknn::pipeline::config::{DataSource, ExperimentConfig, HoldoutFilter};
use molknn::pipeline::data::{load_experiment_data, load_feature_table_for};
use molknn::pipeline::emit::{emit_results, load_results_csv};
use molknn::pipeline::experiments::{run_cv_learning_curve, run_extrapolation};
use molknn::pipeline::synthetic::extensive_clusters;

fn write_dataset(dir: &Path, n: usize) -> std::path::PathBuf {
    let set = extensive_clusters(n, 17).unwrap();
    let comments: Vec<String> = set
        .structures
        .iter()
        .zip(&set.labels)
        .map(|(s, y)| {
            let c = s.composition.as_ref().unwrap();
            let tag: String = c.iter().map(|(k, v)| format!("{v}{k}")).collect();
            format!("{y} {tag}")
        })
        .collect();
    let frames: Vec<_> = set.structures.iter().zip(&comments).map(|(s, c)| (s, c.as_str())).collect();
    let path = dir.join("clusters.xyz");
    let mut out = Vec::new();
    write_xyz(&mut out, &frames).unwrap();
    fs::write(&path, out).unwrap();
    path
}

fn write_config(dir: &Path, xyz: &Path) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(
        &path,
        format!(
            r#"
models = ["krr", "knn_euclidean"]
sizes = [40, 80]
k_cv = 3
seed = 5
output_dir = "{out}"

[dataset]
kind = "xyz"
files = ["{xyz}"]
property_column = 0
composition_pattern = '(\d+)([A-Za-z]+)'

[krr]
sigma_grid = [1.0, 4.0]
lambda_grid = [1e-8, 1e-4]

[knn]
k_max = 10
"#,
            out = dir.join("results").display(),
            xyz = xyz.display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn xyz_to_results() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = write_dataset(dir.path(), 150);
    let cfg = ExperimentConfig::load(write_config(dir.path(), &xyz)).unwrap();
    let data = load_experiment_data(&cfg).unwrap();
    assert_eq!(data.len(), 150);
    assert!(data.has_local());
    assert!(data.compositions.iter().all(Option::is_some));

    let report = run_cv_learning_curve(&cfg, &data).unwrap();
    assert_eq!(report.records.len(), 3 * 2 * 2);
    assert!(report.records.iter().all(|r| r.mae.is_finite() && r.n_test == 50));
    assert!(report.audit.iter().all(|a| a.test_overlap == 0));
    let krr = report.records.iter().find(|r| r.model == "krr").unwrap();
    let hp: serde_json::Value = serde_json::from_str(&krr.hyperparameters).unwrap();
    assert_eq!(hp["kernel"], "local");

    let files = emit_results(&report.records, &cfg.output_dir).unwrap();
    assert_eq!(load_results_csv(&files.results).unwrap(), report.records);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.summary).unwrap()).unwrap();
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["n_runs"] == 3));
}

#[test]
fn feature_table_reload_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = write_dataset(dir.path(), 60);
    let cfg = ExperimentConfig::load(write_config(dir.path(), &xyz)).unwrap();
    let table = load_feature_table_for(&cfg).unwrap();
    let path = dir.path().join("features.bin");
    save_feature_table(&table, &path).unwrap();
    assert_eq!(load_feature_table(&path).unwrap(), table);

    let from_xyz = load_experiment_data(&cfg).unwrap();
    let from_file = load_experiment_data(&ExperimentConfig {
        dataset: DataSource::Features { path },
        ..cfg
    })
    .unwrap();
    assert_eq!(from_file, from_xyz);
}

#[test]
fn extrapolation_from_xyz_compositions() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = write_dataset(dir.path(), 200);
    let mut cfg = ExperimentConfig::load(write_config(dir.path(), &xyz)).unwrap();
    cfg.models.retain(|m| m.is_knn());
    cfg.sizes = vec![60];
    let data = load_experiment_data(&cfg).unwrap();
    let report = run_extrapolation(&cfg, &data, &HoldoutFilter::LargestComposition).unwrap();
    let ex = report.records.iter().find(|r| r.split == "extrapolation").unwrap();
    let inn = report.records.iter().find(|r| r.split == "interpolation").unwrap();
    assert!(ex.mae > inn.mae, "{} vs {}", ex.mae, inn.mae);
}
