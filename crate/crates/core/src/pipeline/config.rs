//! Experiment configuration, read from a TOML or JSON file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{composition_tag, Composition, Element, EnergyUnit, XyzFormat};
use crate::descriptors::DescriptorParams;
use crate::error::{Error, Result};
use crate::knn::Weighting;
use crate::mlkr::MlkrConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Krr,
    KnnEuclidean,
    KnnKernelInduced,
    KnnMlkr,
    KernelRegressionMlkr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Krr,
        ModelKind::KnnEuclidean,
        ModelKind::KnnKernelInduced,
        ModelKind::KnnMlkr,
        ModelKind::KernelRegressionMlkr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Krr => "krr",
            ModelKind::KnnEuclidean => "knn_euclidean",
            ModelKind::KnnKernelInduced => "knn_kernel_induced",
            ModelKind::KnnMlkr => "knn_mlkr",
            ModelKind::KernelRegressionMlkr => "kernel_regression_mlkr",
        }
    }

    pub fn is_knn(self) -> bool {
        matches!(self, ModelKind::KnnEuclidean | ModelKind::KnnKernelInduced | ModelKind::KnnMlkr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|m| m.name()).collect();
                Error::config(format!("unknown model `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// 50-d inputs where 5 directions carry the signal.
    Mahalanobis,
    /// Molecular clusters whose label counts their atoms.
    Extensive,
    /// 1-d inputs with noise that grows along the axis.
    Heteroscedastic,
    /// Smooth 1-d function plus homoscedastic noise.
    Smooth1d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Xyz {
        files: Vec<PathBuf>,
        #[serde(default)]
        format: XyzFormat,
        /// Comment-line token holding the label (QM9: 12 for U0).
        #[serde(default)]
        property_column: Option<usize>,
        #[serde(default)]
        unit: EnergyUnit,
        /// CSV with `id,label_low,label_high` columns; overrides frame labels.
        #[serde(default)]
        labels_csv: Option<PathBuf>,
        /// Regex with count and tag groups, applied to each comment line.
        #[serde(default)]
        composition_pattern: Option<String>,
        /// Per-atom reference energies (same unit as the labels) subtracted
        /// from each label, e.g. to turn total energies into atomization
        /// energies.
        #[serde(default)]
        atom_references: BTreeMap<Element, f64>,
    },
    Features {
        path: PathBuf,
    },
    Synthetic {
        generator: SyntheticKind,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            generator: SyntheticKind::Mahalanobis,
            n: 1000,
            seed: 0,
        }
    }
}

/// Which items form the extrapolation holdout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HoldoutFilter {
    /// Items whose composition has the largest total monomer count.
    LargestComposition,
    /// Items with exactly this composition tag, e.g. `4SA5W`.
    Composition(String),
    /// Items with at least this many atoms.
    MinAtoms(usize),
}

impl HoldoutFilter {
    /// Positions of the matching items.
    pub fn select(&self, compositions: &[Option<Composition>], n_atoms: &[usize]) -> Vec<usize> {
        match self {
            HoldoutFilter::LargestComposition => {
                let size = |c: &Composition| c.values().map(|&v| v as u64).sum::<u64>();
                let Some(max) = compositions.iter().flatten().map(size).max() else {
                    return Vec::new();
                };
                (0..compositions.len())
                    .filter(|&i| compositions[i].as_ref().is_some_and(|c| size(c) == max))
                    .collect()
            }
            HoldoutFilter::Composition(tag) => (0..compositions.len())
                .filter(|&i| compositions[i].as_ref().is_some_and(|c| composition_tag(c) == *tag))
                .collect(),
            HoldoutFilter::MinAtoms(m) => (0..n_atoms.len()).filter(|&i| n_atoms[i] >= *m).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrrKernelChoice {
    /// Local sum kernel when per-atom descriptors exist, else global.
    Auto,
    Global,
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrrSettings {
    pub kernel: KrrKernelChoice,
    /// Fixed hyperparameters; both must be set to skip the grid search.
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub sigma_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub grid_train: usize,
    pub grid_validation: usize,
}

impl Default for KrrSettings {
    fn default() -> Self {
        KrrSettings {
            kernel: KrrKernelChoice::Auto,
            sigma: None,
            lambda: None,
            sigma_grid: None,
            lambda_grid: None,
            grid_train: 4000,
            grid_validation: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnSettings {
    /// Fixed k; when absent k is chosen by leave-one-out search.
    pub k: Option<usize>,
    pub k_max: usize,
    /// Largest training subsample used for the k search.
    pub k_search_cap: usize,
    pub weighting: Weighting,
    /// Kernel width for the kernel-induced metric; defaults to the median
    /// pairwise distance of a training sample.
    pub kernel_sigma: Option<f64>,
    pub kernel_normalize: bool,
    /// Use the local sum kernel for the kernel-induced metric when per-atom
    /// descriptors exist.
    pub kernel_local: bool,
}

impl Default for KnnSettings {
    fn default() -> Self {
        KnnSettings {
            k: None,
            k_max: 30,
            k_search_cap: 5000,
            weighting: Weighting::Reciprocal,
            kernel_sigma: None,
            kernel_normalize: false,
            kernel_local: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KSweepSettings {
    pub k_values: Vec<usize>,
    pub model: ModelKind,
}

impl Default for KSweepSettings {
    fn default() -> Self {
        KSweepSettings {
            k_values: (1..=30).collect(),
            model: ModelKind::KnnEuclidean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub levels: Vec<f64>,
    /// Neighbours per quantile estimate.
    pub k: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            levels: vec![0.05, 0.25, 0.5, 0.75, 0.95],
            k: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    pub descriptor: DescriptorParams,
    pub models: Vec<ModelKind>,
    /// Learning-curve training sizes.
    pub sizes: Vec<usize>,
    pub k_cv: usize,
    pub seed: u64,
    pub delta_learning: bool,
    pub extrapolation: Option<HoldoutFilter>,
    pub output_dir: PathBuf,
    pub krr: KrrSettings,
    pub knn: KnnSettings,
    pub mlkr: MlkrConfig,
    pub k_sweep: KSweepSettings,
    pub calibration: CalibrationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DataSource::default(),
            descriptor: DescriptorParams::default(),
            models: vec![ModelKind::KnnEuclidean],
            sizes: vec![100],
            k_cv: 5,
            seed: 0,
            delta_learning: false,
            extrapolation: None,
            output_dir: PathBuf::from("results"),
            krr: KrrSettings::default(),
            knn: KnnSettings::default(),
            mlkr: MlkrConfig::default(),
            k_sweep: KSweepSettings::default(),
            calibration: CalibrationSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses `.toml` files as TOML and anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::config("at least one model is required"));
        }
        if self.k_cv < 2 {
            return Err(Error::config("k_cv must be at least 2"));
        }
        if self.sizes.contains(&0) {
            return Err(Error::config("training sizes must be positive"));
        }
        if self.knn.k == Some(0) || self.knn.k_max == 0 {
            return Err(Error::config("k and k_max must be at least 1"));
        }
        if self.knn.k_search_cap < 2 {
            return Err(Error::config("k_search_cap must be at least 2"));
        }
        if self.calibration.k == 0 || self.calibration.levels.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::config("calibration needs k ≥ 1 and levels in [0, 1]"));
        }
        if self.k_sweep.k_values.contains(&0) {
            return Err(Error::config("k-sweep values must be at least 1"));
        }
        if let (Some(s), Some(l)) = (self.krr.sigma, self.krr.lambda) {
            if !(s > 0.0) || !(l >= 0.0) {
                return Err(Error::config("krr sigma must be positive and lambda nonnegative"));
            }
        }
        if let DataSource::Xyz { composition_pattern: Some(p), .. } = &self.dataset {
            crate::dataset::CompositionParser::new(p)?;
        }
        self.mlkr.validate()?;
        self.descriptor.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            r#"
models = ["krr", "knn_mlkr"]
sizes = [100, 200]
seed = 3
[dataset]
kind = "synthetic"
generator = "extensive"
n = 300
[knn]
k = 12
[extrapolation]
composition = "4SA5W"
"#,
        )
        .unwrap();
        let a = ExperimentConfig::load(&toml_path).unwrap();
        assert_eq!(a.models, vec![ModelKind::Krr, ModelKind::KnnMlkr]);
        assert_eq!(a.knn.k, Some(12));
        assert_eq!(a.k_cv, 5);
        assert_eq!(a.extrapolation, Some(HoldoutFilter::Composition("4SA5W".into())));
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::load(&json_path).unwrap(), a);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"models": []}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
        std::fs::write(&p, r#"{"modles": ["krr"]}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
        assert!("knn_cosine".parse::<ModelKind>().is_err());
        assert_eq!("knn_mlkr".parse::<ModelKind>().unwrap(), ModelKind::KnnMlkr);
    }

    #[test]
    fn holdout_filters() {
        let c = |sa: u32, w: u32| -> Option<Composition> { Some([("SA".to_string(), sa), ("W".to_string(), w)].into()) };
        let comps = vec![c(1, 1), c(4, 5), None, c(5, 4), c(2, 0)];
        let atoms = vec![3, 30, 50, 30, 4];
        assert_eq!(HoldoutFilter::LargestComposition.select(&comps, &atoms), vec![1, 3]);
        assert_eq!(HoldoutFilter::Composition("4SA5W".into()).select(&comps, &atoms), vec![1]);
        assert_eq!(HoldoutFilter::MinAtoms(30).select(&comps, &atoms), vec![1, 2, 3]);
        assert!(HoldoutFilter::LargestComposition.select(&[None], &[1]).is_empty());
    }
}
