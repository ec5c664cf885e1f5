use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Element, Structure};
use crate::error::{Error, Result};

pub const HARTREE_TO_KCAL_PER_MOL: f64 = 627.509474;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyUnit {
    #[default]
    KcalPerMol,
    Hartree,
}

impl EnergyUnit {
    /// Factor converting a value in this unit to kcal/mol.
    pub fn to_kcal_per_mol(self) -> f64 {
        match self {
            EnergyUnit::KcalPerMol => 1.0,
            EnergyUnit::Hartree => HARTREE_TO_KCAL_PER_MOL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Direct,
    Delta,
}

/// `high - low`, elementwise.
pub fn make_delta_labels(high: &[f64], low: &[f64]) -> Result<Vec<f64>> {
    if high.len() != low.len() {
        return Err(Error::shape(format!(
            "high-level labels ({}) and low-level labels ({}) differ in length",
            high.len(),
            low.len()
        )));
    }
    if high.iter().chain(low).any(|v| !v.is_finite()) {
        return Err(Error::config("labels must be finite"));
    }
    Ok(high.iter().zip(low).map(|(h, l)| h - l).collect())
}

/// Structures with their regression targets, in kcal/mol.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledSet {
    pub structures: Vec<Structure>,
    pub labels: Vec<f64>,
    pub label_kind: LabelKind,
    pub low_level_labels: Option<Vec<f64>>,
}

impl LabeledSet {
    pub fn direct(structures: Vec<Structure>, labels: Vec<f64>) -> Result<Self> {
        if structures.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} structures but {} labels",
                structures.len(),
                labels.len()
            )));
        }
        Ok(LabeledSet {
            structures,
            labels,
            label_kind: LabelKind::Direct,
            low_level_labels: None,
        })
    }

    /// Targets become `high - low`; `low` is kept for reconstruction.
    pub fn delta(structures: Vec<Structure>, high: &[f64], low: Vec<f64>) -> Result<Self> {
        let labels = make_delta_labels(high, &low)?;
        if structures.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} structures but {} labels",
                structures.len(),
                labels.len()
            )));
        }
        Ok(LabeledSet {
            structures,
            labels,
            label_kind: LabelKind::Delta,
            low_level_labels: Some(low),
        })
    }

    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    /// Maps a predicted target for item `i` back to the high-level property.
    pub fn reconstruct(&self, i: usize, predicted_target: f64) -> f64 {
        match (&self.label_kind, &self.low_level_labels) {
            (LabelKind::Delta, Some(low)) => low[i] + predicted_target,
            _ => predicted_target,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            structures: idx.iter().map(|&i| self.structures[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_kind: self.label_kind,
            low_level_labels: self
                .low_level_labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn manifest(&self, seed: u64) -> DatasetManifest {
        let mut element_counts = BTreeMap::new();
        for s in &self.structures {
            for e in Element::ALL {
                let c = s.count(e);
                if c > 0 {
                    *element_counts.entry(e.symbol().to_string()).or_insert(0) += c;
                }
            }
        }
        DatasetManifest {
            ids: self.structures.iter().map(|s| s.id.clone()).collect(),
            n_structures: self.len(),
            n_atoms: self.structures.iter().map(Structure::len).sum(),
            element_counts,
            label_kind: self.label_kind,
            label_stats: LabelStats::of(&self.labels),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl LabelStats {
    pub fn of(v: &[f64]) -> LabelStats {
        if v.is_empty() {
            return LabelStats {
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        LabelStats {
            mean,
            std: var.sqrt(),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Canonical description of an ingested dataset, written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub ids: Vec<String>,
    pub n_structures: usize,
    pub n_atoms: usize,
    pub element_counts: BTreeMap<String, usize>,
    pub label_kind: LabelKind,
    pub label_stats: LabelStats,
    pub seed: u64,
}

/// One row of a `id,label_low,label_high` CSV. `label_low` may be empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub id: String,
    pub label_low: Option<f64>,
    pub label_high: f64,
}

/// Reads a label CSV and converts values to kcal/mol.
pub fn load_label_csv(path: impl AsRef<Path>, unit: EnergyUnit) -> Result<Vec<LabelRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    let f = unit.to_kcal_per_mol();
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<LabelRow>().enumerate() {
        let mut row = rec.map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: i + 2,
            message: e.to_string(),
        })?;
        row.label_high *= f;
        row.label_low = row.label_low.map(|l| l * f);
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_examples() {
        assert_eq!(make_delta_labels(&[-10.0], &[-8.0]).unwrap(), vec![-2.0]);
        let v = [1.5, -3.25, 7.0];
        assert!(make_delta_labels(&v, &v).unwrap().iter().all(|&d| d == 0.0));
        assert!(matches!(make_delta_labels(&[1.0], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn delta_reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(1..20);
            // Sterbenz: subtraction of values within a factor of two is exact.
            let high: Vec<f64> = (0..n).map(|_| rng.random_range(-2000.0..-1000.0)).collect();
            let low: Vec<f64> = high.iter().map(|h| h * rng.random_range(0.6..0.99)).collect();
            let d = make_delta_labels(&high, &low).unwrap();
            for ((h, l), d) in high.iter().zip(&low).zip(&d) {
                assert_eq!(l + d, *h);
            }
        }
    }

    #[test]
    fn delta_set_reconstructs_high_level() {
        let s = Structure::new("a", vec![Element::H], vec![[0.0; 3]]).unwrap();
        let set = LabeledSet::delta(vec![s], &[-10.0], vec![-8.0]).unwrap();
        assert_eq!(set.labels, vec![-2.0]);
        assert_eq!(set.reconstruct(0, -2.0), -10.0);
    }

    #[test]
    fn label_csv_units() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        std::fs::write(&p, "id,label_low,label_high\na,-1.0,-1.5\nb,,2.0\n").unwrap();
        let rows = load_label_csv(&p, EnergyUnit::Hartree).unwrap();
        assert_eq!(rows[0].label_high, -1.5 * HARTREE_TO_KCAL_PER_MOL);
        assert_eq!(rows[1].label_low, None);
    }

    #[test]
    fn manifest_counts() {
        let s = Structure::new("w", vec![Element::O, Element::H, Element::H], vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let set = LabeledSet::direct(vec![s.clone(), s], vec![1.0, 3.0]).unwrap();
        let m = set.manifest(42);
        assert_eq!(m.n_atoms, 6);
        assert_eq!(m.element_counts["H"], 4);
        assert_eq!(m.label_stats.mean, 2.0);
        assert_eq!(m.label_stats.std, 1.0);
    }
}
