use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of `n` items to `k_cv` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k_cv: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and deals the permutation round-robin, so
/// fold sizes differ by at most one and the first `n % k_cv` folds are the
/// larger ones.
pub fn make_folds(n: usize, k_cv: usize, seed: u64) -> Result<FoldPlan> {
    if k_cv < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {k_cv}")));
    }
    if n < k_cv {
        return Err(Error::config(format!(
            "cannot split {n} items into {k_cv} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, &item) in perm.iter().enumerate() {
        assignments[item] = pos % k_cv;
    }
    Ok(FoldPlan {
        n,
        k_cv,
        seed,
        assignments,
    })
}

impl FoldPlan {
    /// Items held out in `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignments[i] == fold).collect()
    }

    /// Items outside `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k_cv];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Uniform sample of `m` items from `pool` without replacement.
///
/// The pool is shuffled once with `seed` and the first `m` items returned,
/// so for a fixed seed a smaller sample is always a prefix of a larger one.
pub fn subsample(pool: &[usize], m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > pool.len() {
        return Err(Error::config(format!(
            "cannot draw {m} items from a pool of {}",
            pool.len()
        )));
    }
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    shuffled.truncate(m);
    Ok(shuffled)
}
