//! Molecular representations.
//!
//! Three descriptor families are provided:
//!
//! * [`coulomb_matrix`]: sorted Coulomb matrix, flattened upper triangle.
//! * [`bag_of_bonds`]: Coulomb pair terms bagged by element pair.
//! * [`local_many_body`]: per-atom Gaussian-smeared two- and three-body
//!   distributions resolved by neighbour element, with a smooth cutoff.
//!   [`global_pool`] sums the atom rows into one extensive vector.
//!
//! All of them are invariant to rigid motions; the global ones are also
//! invariant to atom ordering.

mod coulomb;
mod io;
mod lmb;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Element, Structure};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::matrix::Matrix;
use crate::par;

pub use coulomb::{bag_of_bonds, coulomb_matrix, BOHR_IN_ANGSTROM};
pub use io::{load_feature_table, save_feature_table, FeatureTable};
pub use lmb::{cutoff, local_many_body};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    Cm,
    Bob,
    Lmb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmbParams {
    /// Neighbour cutoff (Å).
    pub r_cut: f64,
    pub n_radial: usize,
    /// Gaussian width of the radial basis (Å).
    pub radial_width: f64,
    pub n_angular: usize,
    /// Gaussian width of the angular basis (radians).
    pub angular_width: f64,
    pub use_three_body: bool,
}

impl Default for LmbParams {
    fn default() -> Self {
        LmbParams {
            r_cut: 8.0,
            n_radial: 24,
            radial_width: 0.25,
            n_angular: 8,
            angular_width: std::f64::consts::PI / 8.0,
            use_three_body: true,
        }
    }
}

impl LmbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_cut > 0.0 && self.r_cut.is_finite()) {
            return Err(Error::config("r_cut must be positive"));
        }
        if self.n_radial == 0 {
            return Err(Error::config("n_radial must be at least 1"));
        }
        if !(self.radial_width > 0.0) || !(self.angular_width > 0.0) {
            return Err(Error::config("basis widths must be positive"));
        }
        if self.use_three_body && self.n_angular == 0 {
            return Err(Error::config("n_angular must be at least 1 with three-body terms"));
        }
        Ok(())
    }

    /// Number of unordered neighbour-element pairs.
    pub const N_ELEMENT_PAIRS: usize = Element::ALL.len() * (Element::ALL.len() + 1) / 2;

    pub fn width(&self) -> usize {
        let radial = Element::ALL.len() * self.n_radial;
        if self.use_three_body {
            radial + Self::N_ELEMENT_PAIRS * self.n_angular
        } else {
            radial
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorParams {
    pub kind: DescriptorKind,
    /// Padding for CM and BoB: the largest count of each element in any
    /// structure of the dataset.
    #[serde(default)]
    pub max_atoms_per_element: BTreeMap<Element, usize>,
    #[serde(default)]
    pub lmb: LmbParams,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams::lmb(LmbParams::default())
    }
}

impl DescriptorParams {
    pub fn lmb(lmb: LmbParams) -> Self {
        DescriptorParams {
            kind: DescriptorKind::Lmb,
            max_atoms_per_element: BTreeMap::new(),
            lmb,
        }
    }

    /// CM or BoB parameters padded to fit every structure in `structures`.
    pub fn padded_for(kind: DescriptorKind, structures: &[Structure]) -> Self {
        DescriptorParams {
            kind,
            max_atoms_per_element: max_element_counts(structures),
            lmb: LmbParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DescriptorKind::Lmb => self.lmb.validate(),
            DescriptorKind::Cm | DescriptorKind::Bob => {
                if self.max_atoms_per_element.values().sum::<usize>() == 0 {
                    Err(Error::config("CM/BoB padding (max_atoms_per_element) is empty"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn is_local(&self) -> bool {
        self.kind == DescriptorKind::Lmb
    }

    /// Identifies the column layout these parameters produce.
    pub fn layout_id(&self) -> u64 {
        match self.kind {
            DescriptorKind::Lmb => fingerprint::short(&(&self.kind, &self.lmb)),
            _ => fingerprint::short(&(&self.kind, &self.max_atoms_per_element)),
        }
    }

    /// Dimension of the global descriptor.
    pub fn global_width(&self) -> usize {
        match self.kind {
            DescriptorKind::Lmb => self.lmb.width(),
            DescriptorKind::Cm => {
                let n: usize = self.max_atoms_per_element.values().sum();
                n * (n + 1) / 2
            }
            DescriptorKind::Bob => coulomb::bag_layout(&self.max_atoms_per_element)
                .iter()
                .map(|b| b.2)
                .sum(),
        }
    }

    /// Human-readable name of every global column.
    pub fn column_names(&self) -> Vec<String> {
        match self.kind {
            DescriptorKind::Lmb => lmb::column_names(&self.lmb),
            DescriptorKind::Cm => {
                let n: usize = self.max_atoms_per_element.values().sum();
                (0..n)
                    .flat_map(|i| (i..n).map(move |j| format!("cm:{i}:{j}")))
                    .collect()
            }
            DescriptorKind::Bob => coulomb::bag_layout(&self.max_atoms_per_element)
                .iter()
                .flat_map(|&(a, b, len)| (0..len).map(move |s| format!("bob:{a}{b}:{s}")))
                .collect(),
        }
    }
}

fn max_element_counts(structures: &[Structure]) -> BTreeMap<Element, usize> {
    let mut out = BTreeMap::new();
    for s in structures {
        for e in Element::ALL {
            let c = s.count(e);
            if c > 0 {
                let m = out.entry(e).or_insert(0);
                *m = (*m).max(c);
            }
        }
    }
    out
}

/// Per-atom descriptor rows for one structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDescriptor {
    pub rows: Matrix,
    pub center_elements: Vec<Element>,
    /// [`DescriptorParams::layout_id`] of the parameters that produced it.
    pub layout: u64,
}

impl LocalDescriptor {
    pub fn new(rows: Matrix, center_elements: Vec<Element>, layout: u64) -> Result<Self> {
        if rows.rows() != center_elements.len() {
            return Err(Error::shape(format!(
                "{} descriptor rows for {} atoms",
                rows.rows(),
                center_elements.len()
            )));
        }
        Ok(LocalDescriptor {
            rows,
            center_elements,
            layout,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.center_elements.len()
    }

    pub fn width(&self) -> usize {
        self.rows.cols()
    }

    /// Stacks the atoms of `self` and `other`.
    pub fn concat(&self, other: &LocalDescriptor) -> Result<LocalDescriptor> {
        if self.layout != other.layout || self.width() != other.width() {
            return Err(Error::config("cannot concatenate descriptors of different layouts"));
        }
        let mut data = self.rows.as_slice().to_vec();
        data.extend_from_slice(other.rows.as_slice());
        let mut elements = self.center_elements.clone();
        elements.extend_from_slice(&other.center_elements);
        LocalDescriptor::new(
            Matrix::from_vec(elements.len(), self.width(), data)?,
            elements,
            self.layout,
        )
    }
}

/// A single fixed-length vector describing a whole structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalDescriptor(pub Vec<f64>);

impl GlobalDescriptor {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Column-wise sum of the atom rows.
pub fn global_pool(d: &LocalDescriptor) -> GlobalDescriptor {
    let mut out = vec![0.0; d.width()];
    for row in d.rows.row_iter() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    GlobalDescriptor(out)
}

/// A batch of descriptors of one kind, in dataset order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DescriptorBatch {
    Global(Matrix),
    Local(Vec<LocalDescriptor>),
}

impl DescriptorBatch {
    pub fn len(&self) -> usize {
        match self {
            DescriptorBatch::Global(m) => m.rows(),
            DescriptorBatch::Local(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> DescriptorBatch {
        match self {
            DescriptorBatch::Global(m) => DescriptorBatch::Global(m.select_rows(idx)),
            DescriptorBatch::Local(v) => {
                DescriptorBatch::Local(idx.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DescriptorBatch::Global(_) => "global",
            DescriptorBatch::Local(_) => "local",
        }
    }
}

/// Output of [`featurize`]: global vectors always, per-atom rows for LMB.
#[derive(Clone, Debug, PartialEq)]
pub struct Featurized {
    pub global: Matrix,
    pub local: Option<Vec<LocalDescriptor>>,
}

/// Descriptor of one structure.
pub fn describe(s: &Structure, params: &DescriptorParams) -> Result<(GlobalDescriptor, Option<LocalDescriptor>)> {
    match params.kind {
        DescriptorKind::Cm => Ok((coulomb_matrix(s, params)?, None)),
        DescriptorKind::Bob => Ok((bag_of_bonds(s, params)?, None)),
        DescriptorKind::Lmb => {
            let local = local_many_body(s, params)?;
            Ok((global_pool(&local), Some(local)))
        }
    }
}

/// Featurizes every structure, in parallel when enabled.
pub fn featurize(structures: &[Structure], params: &DescriptorParams) -> Result<Featurized> {
    params.validate()?;
    let results = par::map_slice(structures, |s| describe(s, params));
    let mut globals = Vec::with_capacity(structures.len());
    let mut locals = Vec::with_capacity(structures.len());
    for r in results {
        let (g, l) = r?;
        globals.push(g.0);
        if let Some(l) = l {
            locals.push(l);
        }
    }
    let global = if globals.is_empty() {
        Matrix::zeros(0, params.global_width())
    } else {
        Matrix::from_rows(&globals)?
    };
    Ok(Featurized {
        global,
        local: params.is_local().then_some(locals),
    })
}
