//! Ball tree: each node keeps a centroid and a covering radius.
//!
//! Lower bound for a node: `max(0, d(q, c) - r)`. Splits follow the widest
//! coordinate at the median, as in the k-d tree.

use serde::{Deserialize, Serialize};

use super::search::{Candidates, Scorer, RELATIVE_SLACK};
use crate::matrix::{euclidean, Matrix};

pub(crate) const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Node {
    start: usize,
    end: usize,
    radius: f64,
    children: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallTree {
    dim: usize,
    perm: Vec<usize>,
    nodes: Vec<Node>,
    centers: Vec<f64>,
}

impl BallTree {
    pub fn build(points: &Matrix) -> Self {
        let mut tree = BallTree {
            dim: points.cols(),
            perm: (0..points.rows()).collect(),
            nodes: Vec::new(),
            centers: Vec::new(),
        };
        if points.rows() > 0 {
            tree.build_node(points, 0, points.rows());
        }
        tree
    }

    fn build_node(&mut self, points: &Matrix, start: usize, end: usize) -> usize {
        let dim = self.dim;
        let members = &self.perm[start..end];
        let mut center = vec![0.0; dim];
        for &p in members {
            center.iter_mut().zip(points.row(p)).for_each(|(c, v)| *c += v);
        }
        center.iter_mut().for_each(|c| *c /= members.len() as f64);
        let radius = members
            .iter()
            .map(|&p| euclidean(&center, points.row(p)))
            .fold(0.0, f64::max);
        let (mut lo, mut hi) = (vec![f64::INFINITY; dim], vec![f64::NEG_INFINITY; dim]);
        for &p in members {
            for (d, &v) in points.row(p).iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let (split_dim, spread) = (0..dim)
            .map(|d| (d, hi[d] - lo[d]))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

        let id = self.nodes.len();
        self.nodes.push(Node { start, end, radius, children: None });
        self.centers.extend_from_slice(&center);
        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[(a, split_dim)]
                .total_cmp(&points[(b, split_dim)])
                .then(a.cmp(&b))
        });
        let left = self.build_node(points, start, mid);
        let right = self.build_node(points, mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    fn center(&self, id: usize) -> &[f64] {
        &self.centers[id * self.dim..(id + 1) * self.dim]
    }

    /// Lower bound and the scale used for its rounding allowance.
    fn bound(&self, id: usize, q: &[f64]) -> (f64, f64) {
        let dc = euclidean(q, self.center(id));
        let r = self.nodes[id].radius;
        ((dc - r).max(0.0), dc + r)
    }

    pub(crate) fn search(&self, q: &[f64], scorer: &impl Scorer, out: &mut Candidates) {
        if !self.nodes.is_empty() {
            let (lb, scale) = self.bound(0, q);
            self.visit(0, q, lb, scale, scorer, out);
        }
    }

    fn visit(&self, id: usize, q: &[f64], lb: f64, scale: f64, scorer: &impl Scorer, out: &mut Candidates) {
        if out.can_prune(scorer.bound(lb), RELATIVE_SLACK * scorer.bound(scale) + scorer.slack()) {
            return;
        }
        let node = &self.nodes[id];
        match node.children {
            None => {
                for &p in &self.perm[node.start..node.end] {
                    out.offer(scorer.distance(p), p);
                }
            }
            Some((l, r)) => {
                let (bl, br) = (self.bound(l, q), self.bound(r, q));
                let order = if bl.0 <= br.0 { [(l, bl), (r, br)] } else { [(r, br), (l, bl)] };
                for (child, (lb, scale)) in order {
                    self.visit(child, q, lb, scale, scorer, out);
                }
            }
        }
    }
}
