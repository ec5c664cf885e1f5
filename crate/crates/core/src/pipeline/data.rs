//! The item table every experiment runs on.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use super::synthetic;
use crate::dataset::{
    composition_tag, load_label_csv, parse_xyz, Composition, CompositionParser, LabelKind, LabeledSet, XyzOptions,
};
use crate::descriptors::{load_feature_table, DescriptorBatch, DescriptorParams, FeatureTable, LocalDescriptor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Descriptors, targets and per-item metadata, aligned by position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentData {
    pub ids: Vec<String>,
    pub compositions: Vec<Option<Composition>>,
    pub n_atoms: Vec<usize>,
    /// Regression targets (Δ targets in Δ-learning mode), kcal/mol.
    pub labels: Vec<f64>,
    pub global: Matrix,
    pub local: Option<Vec<LocalDescriptor>>,
}

impl ExperimentData {
    /// Plain feature vectors with generated ids.
    pub fn from_vectors(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!("{} rows with {} labels", x.rows(), y.len())));
        }
        Ok(ExperimentData {
            ids: (0..y.len()).map(|i| format!("item{i}")).collect(),
            compositions: vec![None; y.len()],
            n_atoms: vec![0; y.len()],
            labels: y,
            global: x,
            local: None,
        })
    }

    pub fn from_table(t: &FeatureTable) -> Self {
        ExperimentData {
            ids: t.ids.clone(),
            compositions: t.compositions.clone(),
            n_atoms: t.n_atoms.clone(),
            labels: t.labels.clone(),
            global: t.global.clone(),
            local: t.local.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_local(&self) -> bool {
        self.local.is_some()
    }

    pub fn global_batch(&self, idx: &[usize]) -> DescriptorBatch {
        DescriptorBatch::Global(self.global.select_rows(idx))
    }

    /// Per-atom descriptors when present and wanted, else global vectors.
    pub fn batch(&self, idx: &[usize], prefer_local: bool) -> DescriptorBatch {
        match (&self.local, prefer_local) {
            (Some(l), true) => DescriptorBatch::Local(idx.iter().map(|&i| l[i].clone()).collect()),
            _ => self.global_batch(idx),
        }
    }

    pub fn labels_at(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn composition_tags(&self) -> Vec<Option<String>> {
        self.compositions.iter().map(|c| c.as_ref().map(composition_tag)).collect()
    }
}

/// Reads structures and labels from XYZ files (and an optional label CSV).
pub fn load_labeled_set(source: &DataSource, delta_learning: bool) -> Result<LabeledSet> {
    let DataSource::Xyz {
        files,
        format,
        property_column,
        unit,
        labels_csv,
        composition_pattern,
        atom_references,
    } = source
    else {
        return Err(Error::config("structures can only be read from an xyz data source"));
    };
    let opts = XyzOptions {
        format: *format,
        property_column: *property_column,
        composition_from_comment: composition_pattern.as_deref().map(CompositionParser::new).transpose()?,
    };
    let mut frames = Vec::new();
    for f in files {
        frames.extend(parse_xyz(f, &opts)?);
    }
    if frames.is_empty() {
        return Err(Error::config("the xyz files contain no frames"));
    }
    let reference = |s: &crate::dataset::Structure| -> f64 {
        s.elements().iter().map(|e| atom_references.get(e).copied().unwrap_or(0.0)).sum()
    };
    let factor = unit.to_kcal_per_mol();
    let structures: Vec<_> = frames.iter().map(|f| f.structure.clone()).collect();
    if let Some(csv) = labels_csv {
        let rows = load_label_csv(csv, *unit)?;
        let by_id: HashMap<&str, _> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut high = Vec::with_capacity(structures.len());
        let mut low = Vec::with_capacity(structures.len());
        for s in &structures {
            let r = by_id
                .get(s.id.as_str())
                .ok_or_else(|| Error::config(format!("no label row for structure `{}`", s.id)))?;
            let refk = reference(s) * factor;
            high.push(r.label_high - refk);
            low.push(r.label_low.map(|l| l - refk));
        }
        if delta_learning {
            let low: Vec<f64> = low
                .into_iter()
                .zip(&structures)
                .map(|(l, s)| l.ok_or_else(|| Error::config(format!("structure `{}` has no low-level label", s.id))))
                .collect::<Result<_>>()?;
            return LabeledSet::delta(structures, &high, low);
        }
        return LabeledSet::direct(structures, high);
    }
    if delta_learning {
        return Err(Error::config("Δ-learning needs a labels_csv with low-level labels"));
    }
    let labels = frames
        .iter()
        .map(|f| {
            f.label
                .map(|v| (v - reference(&f.structure)) * factor)
                .ok_or_else(|| Error::config(format!("frame `{}` has no label; set property_column", f.structure.id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    LabeledSet::direct(structures, labels)
}

/// Structures and labels behind the configured source, or `None` for
/// feature files and vector generators.
pub fn load_structures_for(config: &ExperimentConfig) -> Result<Option<LabeledSet>> {
    match &config.dataset {
        DataSource::Xyz { .. } => load_labeled_set(&config.dataset, config.delta_learning).map(Some),
        DataSource::Synthetic { generator, n, seed } if !synthetic::is_vector_kind(*generator) => {
            synthetic::structures(*generator, *n, *seed).map(Some)
        }
        _ => Ok(None),
    }
}

/// Featurized table for structure-based sources.
pub fn load_feature_table_for(config: &ExperimentConfig) -> Result<FeatureTable> {
    if let DataSource::Features { path } = &config.dataset {
        return load_feature_table(path);
    }
    let set = load_structures_for(config)?
        .ok_or_else(|| Error::config("vector generators have no structures to featurize"))?;
    FeatureTable::from_labeled(&set, &descriptor_params_for(&config.descriptor, &set))
}

/// CM and BoB need padding sized to the dataset; fill it in when absent.
pub fn descriptor_params_for(params: &DescriptorParams, set: &LabeledSet) -> DescriptorParams {
    if !params.is_local() && params.max_atoms_per_element.is_empty() {
        DescriptorParams::padded_for(params.kind, &set.structures)
    } else {
        params.clone()
    }
}

/// Everything an experiment needs, from whichever source the config names.
pub fn load_experiment_data(config: &ExperimentConfig) -> Result<ExperimentData> {
    let data = match &config.dataset {
        DataSource::Synthetic { generator, n, seed } if synthetic::is_vector_kind(*generator) => {
            synthetic::vectors(*generator, *n, *seed)?
        }
        _ => {
            let table = load_feature_table_for(config)?;
            if config.delta_learning && table.label_kind != LabelKind::Delta {
                return Err(Error::config("Δ-learning requested but the feature table holds direct labels"));
            }
            ExperimentData::from_table(&table)
        }
    };
    if data.is_empty() {
        return Err(Error::config("the dataset is empty"));
    }
    Ok(data)
}
