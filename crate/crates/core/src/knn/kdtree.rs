//! k-d tree with per-node bounding boxes.
//!
//! Nodes split at the median of the widest coordinate. The lower bound for a
//! node is the distance from the query to its box.

use serde::{Deserialize, Serialize};

use super::search::{Candidates, Scorer, RELATIVE_SLACK};
use crate::matrix::Matrix;

pub(crate) const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Node {
    start: usize,
    end: usize,
    /// Child node ids, or `None` for a leaf.
    children: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdTree {
    dim: usize,
    perm: Vec<usize>,
    nodes: Vec<Node>,
    /// `lo` then `hi` for every node, `2 * dim` values each.
    boxes: Vec<f64>,
}

impl KdTree {
    pub fn build(points: &Matrix) -> Self {
        let dim = points.cols();
        let mut tree = KdTree {
            dim,
            perm: (0..points.rows()).collect(),
            nodes: Vec::new(),
            boxes: Vec::new(),
        };
        if points.rows() > 0 {
            tree.build_node(points, 0, points.rows());
        }
        tree
    }

    fn build_node(&mut self, points: &Matrix, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, children: None });
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &p in &self.perm[start..end] {
            for (d, &v) in points.row(p).iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let (split_dim, spread) = (0..dim)
            .map(|d| (d, hi[d] - lo[d]))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        self.boxes.extend_from_slice(&lo);
        self.boxes.extend_from_slice(&hi);
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

    fn box_distance(&self, node: usize, q: &[f64]) -> f64 {
        let base = node * 2 * self.dim;
        let lo = &self.boxes[base..base + self.dim];
        let hi = &self.boxes[base + self.dim..base + 2 * self.dim];
        let mut s = 0.0;
        for d in 0..self.dim {
            let gap = if q[d] < lo[d] {
                lo[d] - q[d]
            } else if q[d] > hi[d] {
                q[d] - hi[d]
            } else {
                0.0
            };
            s += gap * gap;
        }
        s.sqrt()
    }

    pub(crate) fn search(&self, q: &[f64], scorer: &impl Scorer, out: &mut Candidates) {
        if !self.nodes.is_empty() {
            self.visit(0, q, self.box_distance(0, q), scorer, out);
        }
    }

    fn visit(&self, id: usize, q: &[f64], lb: f64, scorer: &impl Scorer, out: &mut Candidates) {
        let mapped = scorer.bound(lb);
        if out.can_prune(mapped, RELATIVE_SLACK * (mapped + out.bound().min(mapped)) + scorer.slack()) {
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
                let (dl, dr) = (self.box_distance(l, q), self.box_distance(r, q));
                let order = if dl <= dr { [(l, dl), (r, dr)] } else { [(r, dr), (l, dl)] };
                for (child, d) in order {
                    self.visit(child, q, d, scorer, out);
                }
            }
        }
    }
}
