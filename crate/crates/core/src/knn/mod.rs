//! Exact k-nearest-neighbour search and regression.
//!
//! Three metrics are supported: Euclidean, Mahalanobis through a learned
//! transform (points are transformed once and searched with a Euclidean
//! tree), and the distance induced by a kernel in its feature space. Every
//! backend returns the same neighbours as brute force, ordered by
//! `(distance, training index)`.
//!
//! For the global Gaussian kernel the induced distance is a monotone
//! function of the Euclidean one, so the coordinate trees can index it by
//! mapping their box and ball bounds through that function.

mod balltree;
mod kdtree;
mod search;
mod tune;
mod uncertainty;
mod vptree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorBatch;
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::kernels::{induced_distance_cached, raw_self_kernel, Item, KernelParams, RADICAND_TOLERANCE};
use crate::matrix::{euclidean, Matrix};
use crate::mlkr::MlkrTransform;
use crate::par;
use crate::timing::capture_timing;

pub use balltree::BallTree;
pub use kdtree::KdTree;
pub use tune::{tune_k, tune_k_on_index, TuneResult};
pub use uncertainty::{
    calibration_curve, explain, predict_quantiles, quantile, CalibrationPoint, ExplainReport, NeighborRow,
    QuantileValue,
};
pub use vptree::VpTree;

/// Distances at or below this count as exact matches in reciprocal weighting.
pub const ZERO_DISTANCE_EPS: f64 = 1e-12;
pub const DEFAULT_K: usize = 10;
/// Below this many points the auto backend is brute force.
pub const BRUTE_FORCE_BELOW: usize = 500;
/// Largest dimension for which the auto backend picks the k-d tree.
pub const KD_TREE_MAX_DIM: usize = 30;
const TRIANGLE_PRECHECK_TRIPLES: usize = 2_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    Euclidean,
    Mahalanobis(MlkrTransform),
    KernelInduced(KernelParams),
}

impl MetricSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MetricSpec::Euclidean => "euclidean",
            MetricSpec::Mahalanobis(_) => "mahalanobis",
            MetricSpec::KernelInduced(_) => "kernel_induced",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    KdTree,
    BallTree,
    VpTree,
    Brute,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::KdTree, Backend::BallTree, Backend::VpTree, Backend::Brute];

    pub fn name(self) -> &'static str {
        match self {
            Backend::KdTree => "kd_tree",
            Backend::BallTree => "ball_tree",
            Backend::VpTree => "vp_tree",
            Backend::Brute => "brute",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexOptions {
    /// `None` picks a backend from the metric, size and dimension.
    pub backend: Option<Backend>,
    /// Seeds vantage-point selection.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Space {
    Vectors(Matrix),
    Kernel {
        items: DescriptorBatch,
        self_k: Vec<f64>,
        params: KernelParams,
        slack: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Tree {
    Brute,
    Kd(KdTree),
    Ball(BallTree),
    Vp(VpTree),
}

/// A query made ready for distance evaluation against the stored points.
pub(crate) enum Prepared<'a> {
    Vector(std::borrow::Cow<'a, [f64]>),
    Kernel { item: Item<'a>, kqq: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    pub backend: Backend,
    pub metric: MetricSpec,
    pub labels: Vec<f64>,
    pub build_time_cpu_s: f64,
    pub fingerprint: String,
    space: Space,
    tree: Tree,
}

/// The `k` nearest training points of one query, nearest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub labels: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn kernel_distance(items: &DescriptorBatch, self_k: &[f64], params: &KernelParams, i: usize, j: usize) -> f64 {
    induced_distance_cached(items.item(i), items.item(j), self_k[i], self_k[j], params).unwrap_or(f64::NAN)
}

/// Scores points for the coordinate trees. With a kernel width, the
/// Euclidean bound `r` maps to `sqrt(2 - 2 exp(-γ r²))`, the induced
/// distance of a Gaussian kernel, whose self-similarity is exactly one.
struct TreeScorer<'a, F: Fn(usize) -> f64> {
    dist: &'a F,
    gamma: Option<f64>,
    slack: f64,
}

impl<F: Fn(usize) -> f64> search::Scorer for TreeScorer<'_, F> {
    fn distance(&self, p: usize) -> f64 {
        (self.dist)(p)
    }

    fn bound(&self, r: f64) -> f64 {
        match self.gamma {
            None => r,
            Some(g) => (2.0 - 2.0 * (-g * r * r).exp()).max(0.0).sqrt(),
        }
    }

    fn slack(&self) -> f64 {
        self.slack
    }
}

/// Samples triples and pairs to confirm the kernel distance behaves as a
/// pseudometric on these points. Returns false if the triangle inequality
/// fails beyond `slack`; errors if the kernel is visibly not positive
/// definite.
fn kernel_precheck(items: &DescriptorBatch, self_k: &[f64], params: &KernelParams, slack: f64, seed: u64) -> Result<bool> {
    let n = items.len();
    if n < 3 {
        return Ok(true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7213);
    let triples: Vec<[usize; 3]> = (0..TRIANGLE_PRECHECK_TRIPLES)
        .map(|_| [rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)])
        .collect();
    let results = par::map_slice(&triples, |&[a, b, c]| -> Result<bool> {
        let kab = crate::kernels::kernel(items.item(a), items.item(b), &KernelParams { normalize: false, ..*params })?;
        if !params.normalize {
            let r = self_k[a] + self_k[b] - 2.0 * kab;
            if r < -RADICAND_TOLERANCE * self_k[a].max(self_k[b]).max(1.0) {
                return Err(Error::numerical(format!(
                    "kernel-induced radicand {r:e} is negative; the kernel is not positive definite"
                )));
            }
        }
        let d = |i, j| kernel_distance(items, self_k, params, i, j);
        let (ab, bc, ac) = (d(a, b), d(b, c), d(a, c));
        Ok(ac <= ab + bc + slack + 1e-9)
    });
    let mut ok = true;
    for r in results {
        ok &= r?;
    }
    Ok(ok)
}

fn auto_backend(metric: &MetricSpec, n: usize, dim: usize) -> Backend {
    if n < BRUTE_FORCE_BELOW {
        Backend::Brute
    } else if matches!(metric, MetricSpec::KernelInduced(p) if p.local_mode) {
        Backend::VpTree
    } else if dim <= KD_TREE_MAX_DIM {
        Backend::KdTree
    } else {
        Backend::BallTree
    }
}

fn batch_fingerprint(points: &DescriptorBatch) -> String {
    match points {
        DescriptorBatch::Global(m) => fingerprint::of_floats([m.as_slice()]),
        DescriptorBatch::Local(v) => {
            let layouts: Vec<u64> = v.iter().map(|d| d.layout).collect();
            let elements: Vec<_> = v.iter().map(|d| &d.center_elements).collect();
            fingerprint::of_json(&(
                fingerprint::of_floats(v.iter().map(|d| d.rows.as_slice())),
                layouts,
                elements,
            ))
        }
    }
}

/// Builds an exact index with an automatically chosen backend.
pub fn build_index(points: &DescriptorBatch, labels: &[f64], metric: &MetricSpec) -> Result<NeighborIndex> {
    build_index_with(points, labels, metric, IndexOptions::default())
}

pub fn build_index_with(
    points: &DescriptorBatch,
    labels: &[f64],
    metric: &MetricSpec,
    options: IndexOptions,
) -> Result<NeighborIndex> {
    if points.is_empty() {
        return Err(Error::config("cannot build a neighbour index on zero points"));
    }
    if labels.len() != points.len() {
        return Err(Error::shape(format!("{} points with {} labels", points.len(), labels.len())));
    }
    let fp = fingerprint::of_json(&(batch_fingerprint(points), fingerprint::of_floats([labels]), metric));
    let (built, cpu) = capture_timing(|| -> Result<(Space, Tree, Backend)> {
        let space = match (metric, points) {
            (MetricSpec::Euclidean, DescriptorBatch::Global(m)) => Space::Vectors(m.clone()),
            (MetricSpec::Mahalanobis(t), DescriptorBatch::Global(m)) => Space::Vectors(t.transform(m)?),
            (MetricSpec::KernelInduced(params), items) => {
                params.validate()?;
                let self_k = par::map_range(items.len(), |i| raw_self_kernel(items.item(i), params))
                    .into_iter()
                    .collect::<Result<Vec<f64>>>()?;
                // Checks descriptor kind and layout once so later distance
                // evaluations cannot fail.
                induced_distance_cached(items.item(0), items.item(0), self_k[0], self_k[0], params)?;
                if let DescriptorBatch::Local(v) = items {
                    if v.iter().any(|d| d.layout != v[0].layout || d.width() != v[0].width()) {
                        return Err(Error::config("local descriptors with mixed parameters"));
                    }
                }
                let kmax = if params.normalize { 1.0 } else { self_k.iter().copied().fold(0.0, f64::max) };
                Space::Kernel {
                    items: items.clone(),
                    self_k,
                    params: *params,
                    slack: 3e-7 * kmax.sqrt() + 1e-12,
                }
            }
            (_, DescriptorBatch::Local(_)) => {
                return Err(Error::config(
                    "Euclidean and Mahalanobis metrics need global descriptor vectors",
                ))
            }
        };
        let dim = match &space {
            Space::Vectors(m) => m.cols(),
            Space::Kernel { items: DescriptorBatch::Global(m), .. } => m.cols(),
            Space::Kernel { .. } => 0,
        };
        let mut backend = options.backend.unwrap_or_else(|| auto_backend(metric, points.len(), dim));
        let tree = match (&space, backend) {
            (_, Backend::Brute) => Tree::Brute,
            (Space::Vectors(m), Backend::KdTree) => Tree::Kd(KdTree::build(m)),
            (Space::Vectors(m), Backend::BallTree) => Tree::Ball(BallTree::build(m)),
            (Space::Vectors(m), Backend::VpTree) => Tree::Vp(VpTree::build(
                m.rows(),
                |i, j| euclidean(m.row(i), m.row(j)),
                0.0,
                options.seed,
            )),
            (Space::Kernel { items: DescriptorBatch::Global(m), .. }, Backend::KdTree) => Tree::Kd(KdTree::build(m)),
            (Space::Kernel { items: DescriptorBatch::Global(m), .. }, Backend::BallTree) => {
                Tree::Ball(BallTree::build(m))
            }
            (Space::Kernel { .. }, Backend::KdTree | Backend::BallTree) => {
                return Err(Error::config(format!(
                    "the {} backend needs global descriptors; use vp_tree or brute for local kernels",
                    backend.name()
                )))
            }
            (Space::Kernel { items, self_k, params, slack }, Backend::VpTree) => {
                if kernel_precheck(items, self_k, params, *slack, options.seed)? {
                    Tree::Vp(VpTree::build(
                        items.len(),
                        |i, j| kernel_distance(items, self_k, params, i, j),
                        *slack,
                        options.seed,
                    ))
                } else {
                    log::warn!("kernel distance failed the triangle-inequality precheck; using brute force");
                    backend = Backend::Brute;
                    Tree::Brute
                }
            }
        };
        Ok((space, tree, backend))
    });
    let (space, tree, backend) = built?;
    Ok(NeighborIndex {
        backend,
        metric: metric.clone(),
        labels: labels.to_vec(),
        build_time_cpu_s: cpu,
        fingerprint: fp,
        space,
        tree,
    })
}

impl NeighborIndex {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stored points after any transform (vector metrics only).
    pub fn stored_vectors(&self) -> Option<&Matrix> {
        match &self.space {
            Space::Vectors(m) => Some(m),
            Space::Kernel { .. } => None,
        }
    }

    fn prepare<'a>(&self, x: Item<'a>) -> Result<Prepared<'a>> {
        match (&self.space, x) {
            (Space::Vectors(m), Item::Global(v)) => {
                let v: std::borrow::Cow<'a, [f64]> = match &self.metric {
                    MetricSpec::Mahalanobis(t) => {
                        let row = Matrix::from_vec(1, v.len(), v.to_vec())?;
                        t.transform(&row)?.into_vec().into()
                    }
                    _ => v.into(),
                };
                if v.len() != m.cols() {
                    return Err(Error::shape(format!("query has {} features, index has {}", v.len(), m.cols())));
                }
                Ok(Prepared::Vector(v))
            }
            (Space::Vectors(_), Item::Local(_)) => Err(Error::config("this index needs global descriptor queries")),
            (Space::Kernel { items, self_k, params, .. }, item) => {
                let kqq = raw_self_kernel(item, params)?;
                induced_distance_cached(item, items.item(0), kqq, self_k[0], params)?;
                Ok(Prepared::Kernel { item, kqq })
            }
        }
    }

    /// A stored point as a query, bypassing any transform.
    pub(crate) fn prepare_stored(&self, i: usize) -> Prepared<'_> {
        match &self.space {
            Space::Vectors(m) => Prepared::Vector(m.row(i).into()),
            Space::Kernel { items, self_k, .. } => Prepared::Kernel {
                item: items.item(i),
                kqq: self_k[i],
            },
        }
    }

    fn distance(&self, q: &Prepared<'_>, p: usize) -> f64 {
        match (&self.space, q) {
            (Space::Vectors(m), Prepared::Vector(v)) => euclidean(v, m.row(p)),
            (Space::Kernel { items, self_k, params, .. }, Prepared::Kernel { item, kqq }) => {
                induced_distance_cached(*item, items.item(p), *kqq, self_k[p], params).unwrap_or(f64::NAN)
            }
            _ => unreachable!("queries are prepared against their own index"),
        }
    }

    /// The `k` nearest stored points in `(distance, index)` order; `k` must
    /// already be clamped to `1..=n`.
    pub(crate) fn search(&self, q: &Prepared<'_>, k: usize) -> Vec<search::Candidate> {
        let mut out = search::Candidates::new(k);
        let dist = |p: usize| self.distance(q, p);
        let coords: &[f64] = match q {
            Prepared::Vector(v) => v,
            Prepared::Kernel { item: Item::Global(v), .. } => v,
            Prepared::Kernel { .. } => &[],
        };
        let scorer = TreeScorer {
            dist: &dist,
            gamma: match &self.space {
                Space::Kernel { params, .. } => Some(params.gamma()),
                Space::Vectors(_) => None,
            },
            slack: match &self.space {
                Space::Kernel { slack, .. } => *slack,
                Space::Vectors(_) => 0.0,
            },
        };
        match &self.tree {
            Tree::Brute => (0..self.len()).for_each(|p| out.offer(dist(p), p)),
            Tree::Kd(t) => t.search(coords, &scorer, &mut out),
            Tree::Ball(t) => t.search(coords, &scorer, &mut out),
            Tree::Vp(t) => t.search(&dist, &mut out),
        }
        out.into_sorted()
    }

    fn clamp_k(&self, k: usize) -> Result<usize> {
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if k > self.len() {
            log::warn!("k = {k} exceeds the {} indexed points; returning all of them", self.len());
            return Ok(self.len());
        }
        Ok(k)
    }

    fn to_set(&self, cands: Vec<search::Candidate>) -> NeighborSet {
        NeighborSet {
            indices: cands.iter().map(|c| c.index).collect(),
            distances: cands.iter().map(|c| c.distance).collect(),
            labels: cands.iter().map(|c| self.labels[c.index]).collect(),
        }
    }
}

/// The `k` nearest training points of `x`. `k > n` is clamped to `n`.
pub fn query_knn(index: &NeighborIndex, x: Item<'_>, k: usize) -> Result<NeighborSet> {
    let k = index.clamp_k(k)?;
    let q = index.prepare(x)?;
    Ok(index.to_set(index.search(&q, k)))
}

/// [`query_knn`] for every item of `xs`, in parallel over queries.
pub fn query_batch(index: &NeighborIndex, xs: &DescriptorBatch, k: usize) -> Result<Vec<NeighborSet>> {
    let k = index.clamp_k(k)?;
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    if let (MetricSpec::Mahalanobis(t), DescriptorBatch::Global(m)) = (&index.metric, xs) {
        let z = t.transform(m)?;
        return Ok(par::map_range(z.rows(), |i| {
            index.to_set(index.search(&Prepared::Vector(z.row(i).into()), k))
        }));
    }
    index.prepare(xs.item(0))?;
    par::map_range(xs.len(), |i| {
        let q = index.prepare(xs.item(i))?;
        Ok(index.to_set(index.search(&q, k)))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    /// Weights `1/d`.
    #[default]
    Reciprocal,
    /// Weights `1/d²`.
    ReciprocalSquared,
}

/// Running sums for a weighted neighbour prediction, fed in neighbour order.
/// Prediction for every prefix is available in O(1), which is what makes the
/// single-pass k search agree bitwise with explicit refits.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct WeightedSum {
    n: usize,
    sum: f64,
    zero_n: usize,
    zero_sum: f64,
    w_sum: f64,
    wy_sum: f64,
}

impl WeightedSum {
    pub fn push(&mut self, distance: f64, label: f64, weighting: Weighting) {
        self.n += 1;
        self.sum += label;
        if distance <= ZERO_DISTANCE_EPS {
            self.zero_n += 1;
            self.zero_sum += label;
        } else {
            let w = match weighting {
                Weighting::Uniform => return,
                Weighting::Reciprocal => 1.0 / distance,
                Weighting::ReciprocalSquared => 1.0 / (distance * distance),
            };
            self.w_sum += w;
            self.wy_sum += w * label;
        }
    }

    pub fn value(&self, weighting: Weighting) -> f64 {
        match weighting {
            Weighting::Uniform => self.sum / self.n as f64,
            _ if self.zero_n > 0 => self.zero_sum / self.zero_n as f64,
            _ => self.wy_sum / self.w_sum,
        }
    }
}

/// Weighted mean of neighbour labels.
///
/// Uniform weighting returns the plain mean. Reciprocal weighting uses
/// `1/d` (or `1/d²`); if any neighbour lies within [`ZERO_DISTANCE_EPS`],
/// the mean label of those exact matches is returned instead. An empty set
/// yields NaN.
pub fn knn_predict(ns: &NeighborSet, weighting: Weighting) -> f64 {
    let mut acc = WeightedSum::default();
    for (&d, &y) in ns.distances.iter().zip(&ns.labels) {
        acc.push(d, y, weighting);
    }
    acc.value(weighting)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub index: NeighborIndex,
    pub k: usize,
    pub weighting: Weighting,
}

impl KnnModel {
    pub fn new(index: NeighborIndex, k: usize, weighting: Weighting) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        Ok(KnnModel { index, k, weighting })
    }

    pub fn fit(
        points: &DescriptorBatch,
        labels: &[f64],
        metric: &MetricSpec,
        k: usize,
        weighting: Weighting,
    ) -> Result<Self> {
        KnnModel::new(build_index(points, labels, metric)?, k, weighting)
    }

    pub fn neighbors(&self, xs: &DescriptorBatch) -> Result<Vec<NeighborSet>> {
        query_batch(&self.index, xs, self.k)
    }

    pub fn predict(&self, xs: &DescriptorBatch) -> Result<Vec<f64>> {
        Ok(self.neighbors(xs)?.iter().map(|ns| knn_predict(ns, self.weighting)).collect())
    }
}
