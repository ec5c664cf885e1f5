//! Vantage-point tree over any (pseudo)metric.
//!
//! The tree only sees distances through closures, so it works for
//! kernel-induced distances between structures as well as vectors. Each
//! internal node stores the distance shell `[lo, hi]` of both children
//! around its vantage point; the triangle inequality gives the lower bound
//! `max(lo - d(q, v), d(q, v) - hi, 0)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::search::{Candidates, RELATIVE_SLACK};

pub(crate) const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Shell {
    node: usize,
    lo: f64,
    hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { vantage: usize, inner: Option<Shell>, outer: Option<Shell> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VpTree {
    perm: Vec<usize>,
    nodes: Vec<Node>,
    /// Absolute allowance for distance rounding, on top of the relative one.
    slack: f64,
}

impl VpTree {
    /// `dist(i, j)` must be symmetric and satisfy the triangle inequality up
    /// to `slack`.
    pub fn build(n: usize, dist: impl Fn(usize, usize) -> f64, slack: f64, seed: u64) -> Self {
        let mut tree = VpTree {
            perm: (0..n).collect(),
            nodes: Vec::new(),
            slack,
        };
        if n > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            tree.build_node(0, n, &dist, &mut rng);
        }
        tree
    }

    fn build_node(
        &mut self,
        start: usize,
        end: usize,
        dist: &impl Fn(usize, usize) -> f64,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        self.nodes.push(Node::Leaf { start, end });
        let pick = rng.random_range(start..end);
        self.perm.swap(start, pick);
        let vantage = self.perm[start];
        let mut rest: Vec<(f64, usize)> = self.perm[start + 1..end]
            .iter()
            .map(|&p| (dist(vantage, p), p))
            .collect();
        rest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (slot, &(_, p)) in self.perm[start + 1..end].iter_mut().zip(&rest) {
            *slot = p;
        }
        let mid = rest.len() / 2;
        let shell = |lo: usize, hi: usize| (rest[lo].0, rest[hi - 1].0);
        let (in_lo, in_hi) = shell(0, mid.max(1));
        let inner = if mid > 0 {
            let node = self.build_node(start + 1, start + 1 + mid, dist, rng);
            Some(Shell { node, lo: in_lo, hi: in_hi })
        } else {
            None
        };
        let outer = if mid < rest.len() {
            let (lo, hi) = shell(mid, rest.len());
            let node = self.build_node(start + 1 + mid, end, dist, rng);
            Some(Shell { node, lo, hi })
        } else {
            None
        };
        self.nodes[id] = Node::Split { vantage, inner, outer };
        id
    }

    pub(crate) fn search(&self, qdist: &impl Fn(usize) -> f64, out: &mut Candidates) {
        if !self.nodes.is_empty() {
            self.visit(0, qdist, out);
        }
    }

    fn visit(&self, id: usize, qdist: &impl Fn(usize) -> f64, out: &mut Candidates) {
        match &self.nodes[id] {
            Node::Leaf { start, end } => {
                for &p in &self.perm[*start..*end] {
                    out.offer(qdist(p), p);
                }
            }
            Node::Split { vantage, inner, outer } => {
                let d = qdist(*vantage);
                out.offer(d, *vantage);
                let bound = |s: &Shell| ((s.lo - d).max(d - s.hi).max(0.0), d + s.hi);
                let mut children: Vec<(f64, f64, usize)> = [inner, outer]
                    .into_iter()
                    .flatten()
                    .map(|s| {
                        let (lb, scale) = bound(s);
                        (lb, scale, s.node)
                    })
                    .collect();
                children.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (lb, scale, child) in children {
                    if !out.can_prune(lb, self.slack + RELATIVE_SLACK * scale) {
                        self.visit(child, qdist, out);
                    }
                }
            }
        }
    }
}
