//! Seeded synthetic datasets, so experiments and the acceptance suite run
//! without downloads.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::SyntheticKind;
use super::data::ExperimentData;
use crate::dataset::{Element, LabeledSet, Structure};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAHALANOBIS_INFORMATIVE: usize = 5;
pub const MAHALANOBIS_DISTRACTORS: usize = 45;
pub const MAHALANOBIS_NOISE: f64 = 0.1;
/// Mixing of the informative coordinates is fixed across seeds so that
/// separately drawn train and test sets share one target function.
const MIXING_SEED: u64 = 0x0A11CE;

pub fn is_vector_kind(kind: SyntheticKind) -> bool {
    kind != SyntheticKind::Extensive
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn mixing() -> [[f64; MAHALANOBIS_INFORMATIVE]; MAHALANOBIS_INFORMATIVE] {
    let mut rng = ChaCha8Rng::seed_from_u64(MIXING_SEED);
    let mut l = [[0.0; MAHALANOBIS_INFORMATIVE]; MAHALANOBIS_INFORMATIVE];
    for row in &mut l {
        row.iter_mut().for_each(|v| *v = normal(&mut rng));
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    l
}

/// The noise-free target of the Mahalanobis benchmark.
pub fn mahalanobis_target(x: &[f64]) -> f64 {
    let l = mixing();
    let u: Vec<f64> = l
        .iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    (1.5 * u[0]).sin() + 0.5 * u[1] * u[2] + 0.25 * u[3] * u[3] + 0.5 * u[4]
}

/// Vector-valued generators. Inputs and labels are drawn from `seed`.
pub fn vectors(kind: SyntheticKind, n: usize, seed: u64) -> Result<ExperimentData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = match kind {
        SyntheticKind::Mahalanobis => {
            let p = MAHALANOBIS_INFORMATIVE + MAHALANOBIS_DISTRACTORS;
            let x = Matrix::from_fn(n, p, |_, _| normal(&mut rng));
            let y = x
                .row_iter()
                .map(|r| mahalanobis_target(r))
                .collect::<Vec<_>>()
                .into_iter()
                .map(|v| v + MAHALANOBIS_NOISE * normal(&mut rng))
                .collect();
            (x, y)
        }
        SyntheticKind::Heteroscedastic => {
            let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
            let y = x.row_iter().map(|r| r[0]).collect::<Vec<_>>();
            let y = y
                .into_iter()
                .map(|t| (2.0 * PI * t).sin() + heteroscedastic_sd(t) * normal(&mut rng))
                .collect();
            (x, y)
        }
        SyntheticKind::Smooth1d => {
            let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(0.0..2.0 * PI));
            let y = x.row_iter().map(|r| r[0]).collect::<Vec<_>>();
            let y = y.into_iter().map(|t| t.sin() + 0.3 * normal(&mut rng)).collect();
            (x, y)
        }
        SyntheticKind::Extensive => {
            return Err(Error::config("the extensive generator produces structures, not vectors"))
        }
    };
    ExperimentData::from_vectors(x, y)
}

/// Noise scale of the heteroscedastic generator at `x`.
pub fn heteroscedastic_sd(x: f64) -> f64 {
    0.1 + 0.5 * x
}

/// Largest total monomer count in the extensive generator.
pub const MAX_CLUSTER_SIZE: u32 = 5;

fn water() -> Vec<(Element, [f64; 3])> {
    vec![
        (Element::O, [0.0, 0.0, 0.0]),
        (Element::H, [0.757, 0.586, 0.0]),
        (Element::H, [-0.757, 0.586, 0.0]),
    ]
}

fn acid() -> Vec<(Element, [f64; 3])> {
    vec![
        (Element::S, [0.0, 0.0, 0.0]),
        (Element::O, [1.42, 0.0, 0.0]),
        (Element::O, [-0.47, 1.34, 0.0]),
        (Element::O, [-0.47, -0.67, 1.16]),
        (Element::O, [-0.47, -0.67, -1.16]),
        (Element::H, [-0.10, -1.60, 1.20]),
        (Element::H, [-0.10, -1.60, -1.20]),
    ]
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // Normalized random quaternion.
    let mut q = [normal(rng), normal(rng), normal(rng), normal(rng)];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= n);
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Clusters of acid (`SA`) and water (`W`) monomers with total size drawn
/// uniformly from `1..=MAX_CLUSTER_SIZE`. The label is the atom count.
pub fn extensive_clusters(n: usize, seed: u64) -> Result<LabeledSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut structures = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let total = rng.random_range(1..=MAX_CLUSTER_SIZE);
        let sa = rng.random_range(0..=total);
        let w = total - sa;
        let mut centres: Vec<[f64; 3]> = Vec::new();
        let mut elements = Vec::new();
        let mut coords = Vec::new();
        let monomers = std::iter::repeat_n(acid(), sa as usize).chain(std::iter::repeat_n(water(), w as usize));
        for template in monomers {
            let centre = loop {
                let r = 2.0 + 1.5 * centres.len() as f64;
                let c = [0.0; 3].map(|_: f64| rng.random_range(-r..r));
                if centres.iter().all(|o| (0..3).map(|d| (c[d] - o[d]).powi(2)).sum::<f64>() > 3.5 * 3.5) {
                    break c;
                }
            };
            centres.push(centre);
            let rot = random_rotation(&mut rng);
            for (e, p) in template {
                elements.push(e);
                coords.push([0, 1, 2].map(|r| centre[r] + (0..3).map(|c| rot[r][c] * p[c]).sum::<f64>()));
            }
        }
        let mut composition = BTreeMap::new();
        if sa > 0 {
            composition.insert("SA".to_string(), sa);
        }
        if w > 0 {
            composition.insert("W".to_string(), w);
        }
        labels.push(elements.len() as f64);
        structures.push(Structure::new(format!("cluster{i}"), elements, coords)?.with_composition(composition));
    }
    LabeledSet::direct(structures, labels)
}

/// Structure-valued generators.
pub fn structures(kind: SyntheticKind, n: usize, seed: u64) -> Result<LabeledSet> {
    match kind {
        SyntheticKind::Extensive => extensive_clusters(n, seed),
        _ => Err(Error::config("this synthetic generator produces vectors, not structures")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        for kind in [SyntheticKind::Mahalanobis, SyntheticKind::Heteroscedastic, SyntheticKind::Smooth1d] {
            let a = vectors(kind, 50, 1).unwrap();
            assert_eq!(a, vectors(kind, 50, 1).unwrap());
            assert_ne!(a.labels, vectors(kind, 50, 2).unwrap().labels);
        }
        let s = extensive_clusters(20, 4).unwrap();
        assert_eq!(s.labels, extensive_clusters(20, 4).unwrap().labels);
    }

    #[test]
    fn mahalanobis_shape_and_signal() {
        let d = vectors(SyntheticKind::Mahalanobis, 400, 3).unwrap();
        assert_eq!(d.global.cols(), 50);
        let resid: f64 = (0..d.len())
            .map(|i| (d.labels[i] - mahalanobis_target(d.global.row(i))).powi(2))
            .sum::<f64>()
            / d.len() as f64;
        assert!((resid.sqrt() - MAHALANOBIS_NOISE).abs() < 0.02);
    }

    #[test]
    fn extensive_labels_count_atoms() {
        let s = extensive_clusters(60, 5).unwrap();
        for (st, &y) in s.structures.iter().zip(&s.labels) {
            assert_eq!(y, st.len() as f64);
            let c = st.composition.as_ref().unwrap();
            let sa = c.get("SA").copied().unwrap_or(0) as usize;
            let w = c.get("W").copied().unwrap_or(0) as usize;
            assert_eq!(st.len(), 7 * sa + 3 * w);
            assert!((1..=MAX_CLUSTER_SIZE as usize).contains(&(sa + w)));
            for i in 0..st.len() {
                for j in 0..i {
                    assert!(st.distance(i, j) > 0.5);
                }
            }
        }
    }
}
