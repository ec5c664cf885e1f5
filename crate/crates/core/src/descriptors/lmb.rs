//! Local many-body descriptor.
//!
//! Row layout for an atom:
//!
//! ```text
//! [ radial(H) | radial(C) | ... | radial(S) | angular(HH) | angular(HC) | ... | angular(SS) ]
//! ```
//!
//! `radial(E)` holds `n_radial` Gaussians in the distance to neighbours of
//! element `E`; `angular(EF)` holds `n_angular` Gaussians in the angle
//! subtended at the centre by a neighbour pair of elements `{E, F}`. Every
//! contribution is weighted by the smooth cosine cutoff of the distances
//! involved, so the rows vary continuously as atoms cross `r_cut`.

use std::f64::consts::PI;

use super::{DescriptorKind, DescriptorParams, LmbParams, LocalDescriptor};
use crate::dataset::{Element, Structure};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `0.5·(cos(π r / r_cut) + 1)` inside the cutoff, zero outside.
pub fn cutoff(r: f64, r_cut: f64) -> f64 {
    if r < r_cut {
        0.5 * ((PI * r / r_cut).cos() + 1.0)
    } else {
        0.0
    }
}

fn radial_center(m: usize, p: &LmbParams) -> f64 {
    p.r_cut * (m as f64 + 0.5) / p.n_radial as f64
}

fn angular_center(m: usize, p: &LmbParams) -> f64 {
    PI * (m as f64 + 0.5) / p.n_angular as f64
}

fn pair_index(a: Element, b: Element) -> usize {
    let (lo, hi) = if a <= b { (a.index(), b.index()) } else { (b.index(), a.index()) };
    let n = Element::ALL.len();
    // Row-major position of (lo, hi) in the upper triangle.
    lo * n - lo * (lo + 1) / 2 + hi
}

pub(crate) fn column_names(p: &LmbParams) -> Vec<String> {
    let mut out = Vec::with_capacity(p.width());
    for e in Element::ALL {
        for m in 0..p.n_radial {
            out.push(format!("rad:{e}:{m}"));
        }
    }
    if p.use_three_body {
        let mut pairs = Vec::new();
        for (i, a) in Element::ALL.iter().enumerate() {
            for b in &Element::ALL[i..] {
                pairs.push((*a, *b));
            }
        }
        pairs.sort_by_key(|&(a, b)| pair_index(a, b));
        for (a, b) in pairs {
            for m in 0..p.n_angular {
                out.push(format!("ang:{a}{b}:{m}"));
            }
        }
    }
    out
}

struct Neighbor {
    element: Element,
    r: f64,
    weight: f64,
    v: [f64; 3],
}

pub fn local_many_body(s: &Structure, params: &DescriptorParams) -> Result<LocalDescriptor> {
    if params.kind != DescriptorKind::Lmb {
        return Err(Error::config("local_many_body called with non-LMB parameters"));
    }
    let p = &params.lmb;
    p.validate()?;
    let n = s.len();
    let width = p.width();
    let radial_gamma = 1.0 / (2.0 * p.radial_width * p.radial_width);
    let angular_gamma = 1.0 / (2.0 * p.angular_width * p.angular_width);
    let angular_offset = Element::ALL.len() * p.n_radial;
    let mut rows = Matrix::zeros(n, width);
    let coords = s.coords();
    let mut neighbors: Vec<Neighbor> = Vec::new();
    for i in 0..n {
        neighbors.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let v = [
                coords[j][0] - coords[i][0],
                coords[j][1] - coords[i][1],
                coords[j][2] - coords[i][2],
            ];
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let weight = cutoff(r, p.r_cut);
            if weight > 0.0 {
                neighbors.push(Neighbor {
                    element: s.elements()[j],
                    r,
                    weight,
                    v,
                });
            }
        }
        let row = rows.row_mut(i);
        for nb in &neighbors {
            let base = nb.element.index() * p.n_radial;
            for m in 0..p.n_radial {
                let d = nb.r - radial_center(m, p);
                row[base + m] += nb.weight * (-radial_gamma * d * d).exp();
            }
        }
        if !p.use_three_body {
            continue;
        }
        for (a, na) in neighbors.iter().enumerate() {
            for nb in &neighbors[a + 1..] {
                let cross = [
                    na.v[1] * nb.v[2] - na.v[2] * nb.v[1],
                    na.v[2] * nb.v[0] - na.v[0] * nb.v[2],
                    na.v[0] * nb.v[1] - na.v[1] * nb.v[0],
                ];
                let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
                let cos = na.v[0] * nb.v[0] + na.v[1] * nb.v[1] + na.v[2] * nb.v[2];
                // atan2 stays accurate near 0 and π, where acos does not.
                let theta = sin.atan2(cos);
                let w = na.weight * nb.weight;
                let base = angular_offset + pair_index(na.element, nb.element) * p.n_angular;
                for m in 0..p.n_angular {
                    let d = theta - angular_center(m, p);
                    row[base + m] += w * (-angular_gamma * d * d).exp();
                }
            }
        }
    }
    LocalDescriptor::new(rows, s.elements().to_vec(), params.layout_id())
}
