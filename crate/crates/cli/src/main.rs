//! `molknn`: featurization, training, prediction and the batch experiments.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use molknn::dataset::{make_folds, subsample};
use molknn::descriptors::{save_feature_table, FeatureTable};
use molknn::knn::{explain, MetricSpec};
use molknn::mlkr::{save_transform, write_trace_csv, MlkrTransform};
use molknn::par;
use molknn::pipeline::data::{descriptor_params_for, load_structures_for};
use molknn::pipeline::experiments::max_cv_train_size;
use molknn::pipeline::{
    emit_calibration, emit_k_sweep, emit_results, fit_model, load_experiment_data, load_model, run_calibration,
    run_cv_learning_curve, run_extrapolation, run_k_sweep, run_tune_k, save_model, ExperimentConfig, ExperimentData,
    HoldoutFilter, ModelArtifact, ModelKind, StageLog, TrainedModel,
};

#[derive(Parser, Debug)]
#[command(name = "molknn", version, about = "Metric-learned k-NN regression for molecular properties")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Experiment configuration (TOML or JSON). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated model list, e.g. `krr,knn_mlkr`.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Comma-separated training sizes.
    #[arg(long, global = true, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true, env = "MOLKNN_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute descriptors and write the feature table plus a dataset manifest.
    Featurize,
    /// Fit each model on the dataset (or a seeded subsample of `--sizes`) and save it.
    Train,
    /// Predict every item of the dataset with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
    },
    /// Cross-validated MAE at the largest training size a fold allows, or at `--sizes`.
    Cv,
    /// Cross-validated learning curves over the configured sizes.
    LearningCurve,
    /// Leave-one-out k selection for each k-NN model.
    TuneK,
    /// Test MAE over a grid of k and training sizes.
    KSweep,
    /// Empirical coverage of neighbour-label quantiles.
    Calibrate,
    /// Train away from a composition holdout and compare with interpolation.
    Extrapolate {
        /// `largest`, `min-atoms:N`, or a composition tag such as `4SA5W`.
        #[arg(long)]
        holdout: Option<String>,
    },
    /// Neighbour report for one item under a saved k-NN model.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// Item id in the dataset.
        #[arg(long, conflicts_with = "index")]
        item: Option<String>,
        /// Item position in the dataset.
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.25,0.5,0.75,0.95")]
        quantiles: Vec<f64>,
    },
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = &g.models {
        cfg.models = m.clone();
    }
    if let Some(s) = &g.sizes {
        cfg.sizes = s.clone();
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_holdout(s: &str) -> Result<HoldoutFilter> {
    Ok(match s {
        "largest" => HoldoutFilter::LargestComposition,
        _ => match s.strip_prefix("min-atoms:") {
            Some(n) => HoldoutFilter::MinAtoms(n.parse().with_context(|| format!("bad atom count in `{s}`"))?),
            None => HoldoutFilter::Composition(s.to_string()),
        },
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn featurize(cfg: &ExperimentConfig) -> Result<()> {
    let Some(set) = load_structures_for(cfg)? else {
        bail!("the configured dataset has no structures to featurize");
    };
    let params = descriptor_params_for(&cfg.descriptor, &set);
    let table = FeatureTable::from_labeled(&set, &params)?;
    let features = cfg.output_dir.join("features.bin");
    save_feature_table(&table, &features)?;
    let manifest = cfg.output_dir.join("manifest.json");
    write_json(&manifest, &serde_json::to_value(set.manifest(cfg.seed))?)?;
    println!("{}", features.display());
    println!("{}", manifest.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig, data: &ExperimentData, sized: bool) -> Result<()> {
    let all: Vec<usize> = (0..data.len()).collect();
    let items = match (sized, cfg.sizes.first()) {
        (true, Some(&m)) => subsample(&all, m, cfg.seed)?,
        _ => all,
    };
    for &kind in &cfg.models {
        let mut log = StageLog::default();
        let fitted = fit_model(kind, data, &items, cfg, cfg.seed, &mut log)?;
        log::info!("{kind}: {} items, {:.3} CPU s, {}", items.len(), fitted.train_cpu_s, fitted.hyperparameters);
        if let Some(t) = learned_transform(&fitted.model) {
            let path = cfg.output_dir.join(format!("{kind}.transform.bin"));
            save_transform(t, &path)?;
            write_trace_csv(t, cfg.output_dir.join(format!("{kind}.trace.csv")))?;
            println!("{}", path.display());
        }
        let path = cfg.output_dir.join(format!("{kind}.bin"));
        save_model(&path, &ModelArtifact::new(fitted, data, &items))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn learned_transform(model: &TrainedModel) -> Option<&MlkrTransform> {
    match model {
        TrainedModel::KernelRegression(r) => Some(&r.transform),
        TrainedModel::Knn { model, .. } => match &model.index.metric {
            MetricSpec::Mahalanobis(t) => Some(t),
            _ => None,
        },
        TrainedModel::Krr { .. } => None,
    }
}

fn checked_artifact(path: &Path, data: &ExperimentData) -> Result<ModelArtifact> {
    let artifact = load_model(path).with_context(|| format!("loading {}", path.display()))?;
    if artifact.n_features != data.global.cols() {
        bail!(
            "model expects {} descriptor columns but the dataset has {}",
            artifact.n_features,
            data.global.cols()
        );
    }
    Ok(artifact)
}

fn predict(cfg: &ExperimentConfig, data: &ExperimentData, model: &Path) -> Result<()> {
    let artifact = checked_artifact(model, data)?;
    let fitted = artifact.fitted()?;
    let all: Vec<usize> = (0..data.len()).collect();
    let (pred, cpu) = fitted.predict(data, &all)?;
    let path = cfg.output_dir.join(format!("predictions_{}.csv", artifact.kind));
    let mut out = String::from("id,prediction,label\n");
    for ((id, p), y) in data.ids.iter().zip(&pred).zip(&data.labels) {
        out.push_str(&format!("{id},{p},{y}\n"));
    }
    fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    let mae = pred.iter().zip(&data.labels).map(|(p, y)| (p - y).abs()).sum::<f64>() / data.len() as f64;
    log::info!("{}: MAE {mae:.6} over {} items, {cpu:.3} CPU s", artifact.kind, data.len());
    println!("{}", path.display());
    Ok(())
}

fn explain_item(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    model: &Path,
    item: Option<&str>,
    index: Option<usize>,
    qs: &[f64],
) -> Result<()> {
    let artifact = checked_artifact(model, data)?;
    let fitted = artifact.fitted()?;
    let Some(knn) = fitted.knn() else {
        bail!("explain needs a k-NN model, got {}", artifact.kind);
    };
    let pos = match (item, index) {
        (Some(id), _) => data.ids.iter().position(|x| x == id).with_context(|| format!("no item `{id}`"))?,
        (None, Some(i)) if i < data.len() => i,
        (None, Some(i)) => bail!("index {i} outside the {} items", data.len()),
        (None, None) => bail!("pass --item or --index"),
    };
    let local = matches!(fitted.model, TrainedModel::Knn { local: true, .. });
    let ns = knn.neighbors(&data.batch(&[pos], local))?.remove(0);
    let report = explain(&ns, knn.weighting, &artifact.train_ids, &artifact.train_compositions, qs)?;
    let value = json!({
        "model": artifact.kind,
        "k": knn.k,
        "metric": knn.index.metric.name(),
        "training_fingerprint": artifact.training_fingerprint,
        "item": {"index": pos, "id": data.ids[pos], "label": data.labels[pos]},
        "report": report,
    });
    let path = cfg.output_dir.join(format!("explain_{}_{}.json", artifact.kind, file_stem(&data.ids[pos])));
    write_json(&path, &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.global.threads {
        par::init_threads(t);
    }
    log::info!("{} mode, {} worker(s)", par::mode_label(), par::current_threads());
    let mut cfg = load_config(&cli.global)?;
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    if let Command::Featurize = cli.command {
        return featurize(&cfg);
    }
    let data = load_experiment_data(&cfg)?;
    log::info!("{} items, {} descriptor columns", data.len(), data.global.cols());
    match cli.command {
        Command::Featurize => unreachable!(),
        Command::Train => train(&cfg, &data, cli.global.sizes.is_some())?,
        Command::Predict { model } => predict(&cfg, &data, &model)?,
        Command::Cv | Command::LearningCurve => {
            if matches!(cli.command, Command::Cv) && cli.global.sizes.is_none() {
                cfg.sizes = vec![max_cv_train_size(&make_folds(data.len(), cfg.k_cv, cfg.seed)?)];
            }
            let report = run_cv_learning_curve(&cfg, &data)?;
            let files = emit_results(&report.records, &cfg.output_dir)?;
            println!("{}", files.results.display());
            println!("{}", files.summary.display());
        }
        Command::TuneK => {
            let reports = run_tune_k(&cfg, &data)?;
            let path = cfg.output_dir.join("tune_k.json");
            write_json(&path, &serde_json::to_value(&reports)?)?;
            for r in &reports {
                log::info!("{}: k = {} (LOO MAE {:.6})", r.model, r.k_best, r.loo_mae[r.k_best - 1]);
            }
            println!("{}", path.display());
        }
        Command::KSweep => {
            let path = emit_k_sweep(&run_k_sweep(&cfg, &data)?, &cfg.output_dir)?;
            println!("{}", path.display());
        }
        Command::Calibrate => {
            let path = emit_calibration(&run_calibration(&cfg, &data)?, &cfg.output_dir)?;
            println!("{}", path.display());
        }
        Command::Extrapolate { holdout } => {
            let filter = match holdout {
                Some(h) => parse_holdout(&h)?,
                None => cfg.extrapolation.clone().unwrap_or(HoldoutFilter::LargestComposition),
            };
            let report = run_extrapolation(&cfg, &data, &filter)?;
            let files = emit_results(&report.records, &cfg.output_dir)?;
            println!("{}", files.results.display());
            println!("{}", files.summary.display());
        }
        Command::Explain { model, item, index, quantiles } => {
            explain_item(&cfg, &data, &model, item.as_deref(), index, &quantiles)?
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
