//! Structures, labels, and the bookkeeping for splits and subsamples.

mod folds;
mod labels;
mod xyz;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use folds::{make_folds, subsample, FoldPlan};
pub use labels::{
    load_label_csv, make_delta_labels, DatasetManifest, EnergyUnit, LabelKind, LabelRow,
    LabelStats, LabeledSet, HARTREE_TO_KCAL_PER_MOL,
};
pub use xyz::{
    parse_xyz, parse_xyz_str, write_xyz, CompositionParser, Frame, XyzFormat, XyzOptions,
};

/// Chemical elements the descriptors know about, ordered by atomic number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    H,
    C,
    N,
    O,
    F,
    S,
}

impl Element {
    pub const ALL: [Element; 6] = [
        Element::H,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::S,
    ];

    pub fn atomic_number(self) -> u32 {
        match self {
            Element::H => 1,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::S => 16,
        }
    }

    /// Position in [`Element::ALL`]; used as the channel index by descriptors.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::S => "S",
        }
    }

    pub fn from_symbol(symbol: &str) -> Result<Self> {
        let s = symbol.trim();
        let e = match s {
            "H" | "h" => Element::H,
            "C" | "c" => Element::C,
            "N" | "n" => Element::N,
            "O" | "o" => Element::O,
            "F" | "f" => Element::F,
            "S" | "s" => Element::S,
            _ => {
                return Err(Error::UnsupportedElement {
                    symbol: s.to_string(),
                })
            }
        };
        Ok(e)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Monomer counts of a cluster, e.g. `{"SA": 3, "W": 2}` for "3SA2W".
pub type Composition = BTreeMap<String, u32>;

/// Renders a composition in the canonical `3SA2W` form (tags sorted).
pub fn composition_tag(c: &Composition) -> String {
    c.iter().map(|(k, v)| format!("{v}{k}")).collect()
}

/// One molecule or cluster: element symbols plus Cartesian coordinates (Å).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub id: String,
    elements: Vec<Element>,
    coords: Vec<[f64; 3]>,
    pub composition: Option<Composition>,
}

impl Structure {
    pub fn new(id: impl Into<String>, elements: Vec<Element>, coords: Vec<[f64; 3]>) -> Result<Self> {
        let id = id.into();
        if elements.is_empty() {
            return Err(Error::config(format!("structure `{id}` has no atoms")));
        }
        if elements.len() != coords.len() {
            return Err(Error::shape(format!(
                "structure `{id}`: {} elements but {} coordinates",
                elements.len(),
                coords.len()
            )));
        }
        if coords.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::config(format!(
                "structure `{id}` has non-finite coordinates"
            )));
        }
        Ok(Structure {
            id,
            elements,
            coords,
            composition: None,
        })
    }

    pub fn with_composition(mut self, composition: Composition) -> Self {
        self.composition = Some(composition);
        self
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    pub fn count(&self, e: Element) -> usize {
        self.elements.iter().filter(|&&x| x == e).count()
    }

    /// Applies `x ↦ R x + t` to every atom.
    pub fn transformed(&self, rotation: &[[f64; 3]; 3], translation: [f64; 3]) -> Structure {
        let coords = self
            .coords
            .iter()
            .map(|c| {
                let mut out = translation;
                for (r, o) in rotation.iter().zip(out.iter_mut()) {
                    *o += r[0] * c[0] + r[1] * c[1] + r[2] * c[2];
                }
                out
            })
            .collect();
        Structure {
            coords,
            ..self.clone()
        }
    }

    /// Reorders atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Structure> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len() || perm.iter().any(|&p| p >= self.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::config("atom permutation is not a bijection"));
        }
        Ok(Structure {
            elements: perm.iter().map(|&p| self.elements[p]).collect(),
            coords: perm.iter().map(|&p| self.coords[p]).collect(),
            ..self.clone()
        })
    }

    /// Concatenates two structures, shifting the second by `offset`.
    pub fn merged(&self, other: &Structure, offset: [f64; 3], id: impl Into<String>) -> Structure {
        let mut elements = self.elements.clone();
        elements.extend_from_slice(&other.elements);
        let mut coords = self.coords.clone();
        coords.extend(
            other
                .coords
                .iter()
                .map(|c| [c[0] + offset[0], c[1] + offset[1], c[2] + offset[2]]),
        );
        Structure {
            id: id.into(),
            elements,
            coords,
            composition: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        let err = Structure::new("x", vec![Element::H, Element::H], vec![[0.0; 3]]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(Structure::new("x", vec![], vec![]).is_err());
        assert!(Structure::new("x", vec![Element::H], vec![[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn unknown_element_is_reported() {
        assert!(matches!(
            Element::from_symbol("Cl"),
            Err(Error::UnsupportedElement { .. })
        ));
        assert_eq!(Element::from_symbol("S").unwrap().atomic_number(), 16);
    }

    #[test]
    fn composition_tag_is_canonical() {
        let c: Composition = [("W".to_string(), 2), ("SA".to_string(), 3)].into();
        assert_eq!(composition_tag(&c), "3SA2W");
    }

    #[test]
    fn permutation_must_be_bijective() {
        let s = Structure::new("x", vec![Element::H, Element::O], vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(s.permuted(&[0, 0]).is_err());
        let p = s.permuted(&[1, 0]).unwrap();
        assert_eq!(p.elements(), &[Element::O, Element::H]);
    }
}
