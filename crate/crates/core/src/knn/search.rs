//! Bounded candidate set shared by every backend.
//!
//! Candidates are ordered by `(distance, index)`, so among equidistant points
//! the lower training index wins no matter which backend found them first.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Candidate {
    pub distance: f64,
    pub index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

/// How a coordinate tree scores stored points against one query.
pub(crate) trait Scorer {
    /// Distance from the query to stored point `p`.
    fn distance(&self, p: usize) -> f64;
    /// Lower bound on [`Scorer::distance`] from a lower bound on the
    /// Euclidean distance in coordinate space. Must be nondecreasing.
    fn bound(&self, euclidean: f64) -> f64;
    /// Absolute rounding allowance for [`Scorer::bound`].
    fn slack(&self) -> f64;
}

/// The `k` best candidates seen so far (max-heap on the worst).
pub(crate) struct Candidates {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl Candidates {
    pub fn new(k: usize) -> Self {
        Candidates {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub fn offer(&mut self, distance: f64, index: usize) {
        let c = Candidate { distance, index };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(worst) = self.heap.peek() {
            if c < *worst {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    /// Distance of the current k-th candidate, or infinity until k are held.
    pub fn bound(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.distance)
        }
    }

    /// True when nothing at distance ≥ `lower_bound` can enter the set.
    ///
    /// `slack` absorbs rounding in the bound itself. Equal distances are
    /// never pruned because a lower index could still win the tie.
    pub fn can_prune(&self, lower_bound: f64, slack: f64) -> bool {
        lower_bound - slack > self.bound()
    }

    pub fn into_sorted(self) -> Vec<Candidate> {
        self.heap.into_sorted_vec()
    }
}

/// Relative rounding allowance for bounds built from Euclidean distances.
pub(crate) const RELATIVE_SLACK: f64 = 1e-10;
