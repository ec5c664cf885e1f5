//! Coulomb matrix and Bag-of-Bonds, in atomic units.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{DescriptorKind, DescriptorParams, GlobalDescriptor};
use crate::dataset::{Element, Structure};
use crate::error::{Error, Result};

pub const BOHR_IN_ANGSTROM: f64 = 0.52917721092;

const COINCIDENT_ANGSTROM: f64 = 1e-8;

fn checked_bohr_distance(s: &Structure, i: usize, j: usize) -> Result<f64> {
    let r = s.distance(i, j);
    if r < COINCIDENT_ANGSTROM {
        return Err(Error::DegenerateGeometry(format!(
            "atoms {i} and {j} of `{}` coincide",
            s.id
        )));
    }
    Ok(r / BOHR_IN_ANGSTROM)
}

fn pair_term(s: &Structure, i: usize, j: usize) -> Result<f64> {
    let z = |k: usize| s.elements()[k].atomic_number() as f64;
    Ok(z(i) * z(j) / checked_bohr_distance(s, i, j)?)
}

fn self_term(e: Element) -> f64 {
    0.5 * (e.atomic_number() as f64).powf(2.4)
}

fn sorted_desc(v: &mut [f64]) {
    v.sort_unstable_by(|a, b| b.total_cmp(a));
}

/// Coulomb matrix with rows ordered by descending norm, zero-padded to the
/// total atom count in `params.max_atoms_per_element`, returned as the
/// row-major upper triangle (diagonal included).
pub fn coulomb_matrix(s: &Structure, params: &DescriptorParams) -> Result<GlobalDescriptor> {
    if params.kind != DescriptorKind::Cm {
        return Err(Error::config("coulomb_matrix called with non-CM parameters"));
    }
    let size: usize = params.max_atoms_per_element.values().sum();
    let n = s.len();
    if n > size {
        return Err(Error::config(format!(
            "`{}` has {n} atoms but the Coulomb matrix is padded to {size}",
            s.id
        )));
    }
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = self_term(s.elements()[i]);
        for j in 0..i {
            let v = pair_term(s, i, j)?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    // Norms summed over sorted squares so they do not depend on atom order.
    let norms: Vec<f64> = m
        .iter()
        .map(|row| {
            let mut sq: Vec<f64> = row.iter().map(|x| x * x).collect();
            sorted_desc(&mut sq);
            sq.iter().rev().sum::<f64>().sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        norms[b].total_cmp(&norms[a]).then_with(|| {
            s.elements()[b]
                .atomic_number()
                .cmp(&s.elements()[a].atomic_number())
        })
    });
    let mut out = Vec::with_capacity(size * (size + 1) / 2);
    for i in 0..size {
        for j in i..size {
            out.push(if i < n && j < n { m[order[i]][order[j]] } else { 0.0 });
        }
    }
    Ok(GlobalDescriptor(out))
}

/// `(first, second, bag length)` for each element pair with `first <= second`,
/// in the canonical order of [`Element::ALL`].
pub(crate) fn bag_layout(max: &BTreeMap<Element, usize>) -> Vec<(Element, Element, usize)> {
    let present: Vec<(Element, usize)> = Element::ALL
        .iter()
        .filter_map(|e| max.get(e).filter(|&&c| c > 0).map(|&c| (*e, c)))
        .collect();
    let mut out = Vec::new();
    for (a, &(ea, ca)) in present.iter().enumerate() {
        for &(eb, cb) in &present[a..] {
            let len = if ea == eb { ca * (ca - 1) / 2 } else { ca * cb };
            if len > 0 {
                out.push((ea, eb, len));
            }
        }
    }
    out
}

/// Off-diagonal Coulomb terms bagged per element pair; each bag sorted
/// descending and zero-padded to the dataset-wide bag length.
pub fn bag_of_bonds(s: &Structure, params: &DescriptorParams) -> Result<GlobalDescriptor> {
    if params.kind != DescriptorKind::Bob {
        return Err(Error::config("bag_of_bonds called with non-BoB parameters"));
    }
    for e in Element::ALL {
        let c = s.count(e);
        let cap = params.max_atoms_per_element.get(&e).copied().unwrap_or(0);
        if c > cap {
            return Err(Error::config(format!(
                "`{}` has {c} {e} atoms but bags are padded for {cap}",
                s.id
            )));
        }
    }
    let layout = bag_layout(&params.max_atoms_per_element);
    let mut bags: BTreeMap<(Element, Element), Vec<f64>> = BTreeMap::new();
    let el = s.elements();
    for i in 0..s.len() {
        for j in 0..i {
            let key = match el[i].cmp(&el[j]) {
                Ordering::Greater => (el[j], el[i]),
                _ => (el[i], el[j]),
            };
            bags.entry(key).or_default().push(pair_term(s, i, j)?);
        }
    }
    let mut out = Vec::with_capacity(layout.iter().map(|b| b.2).sum());
    for (a, b, len) in layout {
        let mut bag = bags.remove(&(a, b)).unwrap_or_default();
        sorted_desc(&mut bag);
        bag.resize(len, 0.0);
        out.extend(bag);
    }
    Ok(GlobalDescriptor(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand::seq::{IndexedRandom, SliceRandom};

    fn h2() -> Structure {
        Structure::new("h2", vec![Element::H, Element::H], vec![[0.0; 3], [0.0, 0.0, 0.74]]).unwrap()
    }

    fn random_structure(rng: &mut ChaCha8Rng, n: usize) -> Structure {
        let pool = [Element::H, Element::C, Element::N, Element::O, Element::S];
        let elements = (0..n).map(|_| *pool.choose(rng).unwrap()).collect();
        let coords = (0..n)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        Structure::new("r", elements, coords).unwrap()
    }

    #[test]
    fn single_hydrogen() {
        let s = Structure::new("h", vec![Element::H], vec![[0.0; 3]]).unwrap();
        let p = DescriptorParams::padded_for(DescriptorKind::Cm, std::slice::from_ref(&s));
        assert_eq!(coulomb_matrix(&s, &p).unwrap().0, vec![0.5]);
    }

    #[test]
    fn hydrogen_molecule_off_diagonal() {
        let s = h2();
        let p = DescriptorParams::padded_for(DescriptorKind::Cm, std::slice::from_ref(&s));
        let v = coulomb_matrix(&s, &p).unwrap().0;
        // Hand evaluation: 1·1 / (0.74 Å / 0.52917721092 Å per bohr).
        let hand = 0.52917721092 / 0.74;
        assert_eq!(v.len(), 3);
        assert!((v[1] - hand).abs() < 1e-15);
        assert!((v[1] - 0.71511).abs() < 1e-5);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[2], 0.5);
    }

    #[test]
    fn padding_and_overflow() {
        let s = h2();
        let mut p = DescriptorParams::padded_for(DescriptorKind::Cm, std::slice::from_ref(&s));
        p.max_atoms_per_element.insert(Element::O, 1);
        let v = coulomb_matrix(&s, &p).unwrap().0;
        assert_eq!(v.len(), 6);
        assert_eq!(&v[3..], &[0.5, 0.0, 0.0]);
        p.max_atoms_per_element.clear();
        p.max_atoms_per_element.insert(Element::H, 1);
        assert!(matches!(coulomb_matrix(&s, &p), Err(Error::Config(_))));
    }

    #[test]
    fn coincident_atoms() {
        let s = Structure::new("x", vec![Element::H, Element::O], vec![[1.0; 3], [1.0; 3]]).unwrap();
        let p = DescriptorParams::padded_for(DescriptorKind::Cm, std::slice::from_ref(&s));
        assert!(matches!(coulomb_matrix(&s, &p), Err(Error::DegenerateGeometry(_))));
        let p = DescriptorParams::padded_for(DescriptorKind::Bob, std::slice::from_ref(&s));
        assert!(matches!(bag_of_bonds(&s, &p), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 5, 8] {
            for _ in 0..20 {
                let s = random_structure(&mut rng, n);
                if (0..n).any(|i| (0..i).any(|j| s.distance(i, j) < 0.3)) {
                    continue;
                }
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let t = s.permuted(&perm).unwrap();
                for kind in [DescriptorKind::Cm, DescriptorKind::Bob] {
                    let p = DescriptorParams::padded_for(kind, std::slice::from_ref(&s));
                    let f = |x: &Structure| match kind {
                        DescriptorKind::Cm => coulomb_matrix(x, &p).unwrap().0,
                        _ => bag_of_bonds(x, &p).unwrap().0,
                    };
                    assert_eq!(f(&s), f(&t), "{kind:?} changed under permutation");
                }
            }
        }
    }

    #[test]
    fn hydrogen_bag() {
        let s = h2();
        let p = DescriptorParams::padded_for(DescriptorKind::Bob, std::slice::from_ref(&s));
        let v = bag_of_bonds(&s, &p).unwrap().0;
        assert_eq!(v.len(), 1);
        assert!((v[0] - 0.52917721092 / 0.74).abs() < 1e-15);
    }

    #[test]
    fn bags_ignore_pair_assignment() {
        // Homometric point sets: different geometries, identical multisets of
        // pairwise distances.
        let line = |xs: [f64; 6]| {
            Structure::new("h6", vec![Element::H; 6], xs.iter().map(|&x| [x, 0.0, 0.0]).collect()).unwrap()
        };
        let a = line([0.0, 1.0, 4.0, 10.0, 12.0, 17.0]);
        let b = line([0.0, 1.0, 8.0, 11.0, 13.0, 17.0]);
        let p = DescriptorParams::padded_for(DescriptorKind::Bob, std::slice::from_ref(&a));
        assert_eq!(bag_of_bonds(&a, &p).unwrap(), bag_of_bonds(&b, &p).unwrap());
        let p = DescriptorParams::padded_for(DescriptorKind::Cm, std::slice::from_ref(&a));
        assert_ne!(coulomb_matrix(&a, &p).unwrap(), coulomb_matrix(&b, &p).unwrap());
    }

    #[test]
    fn bag_overflow_is_config_error() {
        let s = h2();
        let mut p = DescriptorParams::padded_for(DescriptorKind::Bob, std::slice::from_ref(&s));
        p.max_atoms_per_element.insert(Element::H, 1);
        p.max_atoms_per_element.insert(Element::O, 2);
        assert!(matches!(bag_of_bonds(&s, &p), Err(Error::Config(_))));
    }

    #[test]
    fn bag_layout_order() {
        let max: BTreeMap<Element, usize> = [(Element::O, 2), (Element::H, 3), (Element::S, 1)].into();
        let l = bag_layout(&max);
        let keys: Vec<_> = l.iter().map(|&(a, b, n)| (a.symbol(), b.symbol(), n)).collect();
        assert_eq!(
            keys,
            vec![("H", "H", 3), ("H", "O", 6), ("H", "S", 3), ("O", "O", 1), ("O", "S", 2)]
        );
    }
}
