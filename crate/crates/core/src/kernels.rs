//! Kernels on global and per-atom descriptors, kernel matrices and the
//! kernel-induced distance.
//!
//! The global kernel is the Gaussian `exp(-‖a-b‖² / (2σ²))` without a
//! normalizing prefactor, so `k(a, a) = 1`. The local kernel sums that
//! Gaussian over all atom pairs of two structures whose centre elements
//! match, which makes it extensive in the number of atoms.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorBatch, LocalDescriptor};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::matrix::{squared_euclidean, Matrix};
use crate::par;

/// Radicands of the induced distance below this are numerical errors;
/// smaller negative values are clamped to zero.
pub const RADICAND_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma: f64,
    /// Sum of atomic kernels over per-atom descriptors.
    pub local_mode: bool,
    /// Rescale to unit self-similarity: `k(a,b) / sqrt(k(a,a) k(b,b))`.
    pub normalize: bool,
    /// Also sum atom pairs with different centre elements (local mode only).
    #[serde(default)]
    pub cross_element: bool,
}

impl KernelParams {
    pub fn global(sigma: f64) -> Self {
        KernelParams {
            sigma,
            local_mode: false,
            normalize: false,
            cross_element: false,
        }
    }

    pub fn local(sigma: f64) -> Self {
        KernelParams {
            local_mode: true,
            ..KernelParams::global(sigma)
        }
    }

    pub fn normalized(self) -> Self {
        KernelParams {
            normalize: true,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma > 0.0 && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!("kernel width must be positive, got {}", self.sigma)))
        }
    }

    pub(crate) fn gamma(&self) -> f64 {
        1.0 / (2.0 * self.sigma * self.sigma)
    }
}

/// One descriptor of either kind.
#[derive(Clone, Copy, Debug)]
pub enum Item<'a> {
    Global(&'a [f64]),
    Local(&'a LocalDescriptor),
}

impl DescriptorBatch {
    pub fn item(&self, i: usize) -> Item<'_> {
        match self {
            DescriptorBatch::Global(m) => Item::Global(m.row(i)),
            DescriptorBatch::Local(v) => Item::Local(&v[i]),
        }
    }
}

pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("descriptor lengths {} and {}", a.len(), b.len())));
    }
    Ok((-squared_euclidean(a, b) / (2.0 * sigma * sigma)).exp())
}

/// Sum of the atomic Gaussian over atom pairs with matching centre element.
pub fn local_sum_kernel(a: &LocalDescriptor, b: &LocalDescriptor, sigma: f64) -> Result<f64> {
    check_local(a, b)?;
    Ok(local_sum(a, b, 1.0 / (2.0 * sigma * sigma), false))
}

fn check_local(a: &LocalDescriptor, b: &LocalDescriptor) -> Result<()> {
    if a.layout != b.layout || a.width() != b.width() {
        return Err(Error::config(
            "local descriptors were produced with different descriptor parameters",
        ));
    }
    Ok(())
}

fn local_sum(a: &LocalDescriptor, b: &LocalDescriptor, gamma: f64, cross_element: bool) -> f64 {
    let mut total = 0.0;
    for (ra, ea) in a.rows.row_iter().zip(&a.center_elements) {
        for (rb, eb) in b.rows.row_iter().zip(&b.center_elements) {
            if cross_element || ea == eb {
                total += (-gamma * squared_euclidean(ra, rb)).exp();
            }
        }
    }
    total
}

/// Unnormalized kernel value.
fn raw(a: Item<'_>, b: Item<'_>, p: &KernelParams) -> Result<f64> {
    match (a, b) {
        (Item::Global(x), Item::Global(y)) if !p.local_mode => rbf_kernel(x, y, p.sigma),
        (Item::Local(x), Item::Local(y)) if p.local_mode => {
            check_local(x, y)?;
            Ok(local_sum(x, y, p.gamma(), p.cross_element))
        }
        _ => Err(Error::config(format!(
            "kernel in {} mode applied to the wrong descriptor kind",
            if p.local_mode { "local" } else { "global" }
        ))),
    }
}

/// Kernel value honouring `params.normalize`.
pub fn kernel(a: Item<'_>, b: Item<'_>, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    let kab = raw(a, b, params)?;
    if !params.normalize {
        return Ok(kab);
    }
    let (kaa, kbb) = (raw(a, a, params)?, raw(b, b, params)?);
    normalized_entry(kab, kaa, kbb)
}

fn normalized_entry(kab: f64, kaa: f64, kbb: f64) -> Result<f64> {
    if !(kaa > 0.0 && kbb > 0.0) {
        return Err(Error::numerical("kernel normalization needs a positive diagonal"));
    }
    Ok(kab / (kaa * kbb).sqrt())
}

/// `k(x, x)` for every item, honouring normalization (all ones then).
pub fn self_kernels(x: &DescriptorBatch, params: &KernelParams) -> Result<Vec<f64>> {
    params.validate()?;
    par::map_range(x.len(), |i| kernel(x.item(i), x.item(i), params))
        .into_iter()
        .collect()
}

fn raw_self(x: &DescriptorBatch, params: &KernelParams) -> Result<Vec<f64>> {
    par::map_range(x.len(), |i| raw(x.item(i), x.item(i), params))
        .into_iter()
        .collect()
}

/// `K[i, j] = k(x_i, y_j)`.
pub fn kernel_matrix(x: &DescriptorBatch, y: &DescriptorBatch, params: &KernelParams) -> Result<Matrix> {
    params.validate()?;
    if !x.is_empty() && !y.is_empty() {
        raw(x.item(0), y.item(0), params)?;
    }
    let (dx, dy) = if params.normalize {
        (raw_self(x, params)?, raw_self(y, params)?)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut out = Matrix::zeros(x.len(), y.len());
    let err = std::sync::Mutex::new(None);
    par::for_each_row_mut(out.as_mut_slice(), y.len(), |i, row| {
        for (j, o) in row.iter_mut().enumerate() {
            let v = raw(x.item(i), y.item(j), params).and_then(|v| {
                if params.normalize {
                    normalized_entry(v, dx[i], dy[j])
                } else {
                    Ok(v)
                }
            });
            match v {
                Ok(v) => *o = v,
                Err(e) => {
                    err.lock().expect("error slot").get_or_insert(e);
                    return;
                }
            }
        }
    });
    match err.into_inner().expect("error slot") {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Symmetric `K[i, j] = k(x_i, x_j)`: each pair is evaluated once and
/// mirrored, so the result is exactly symmetric.
pub fn gram_matrix(x: &DescriptorBatch, params: &KernelParams) -> Result<Matrix> {
    params.validate()?;
    let n = x.len();
    if n > 0 {
        raw(x.item(0), x.item(0), params)?;
    }
    let diag = if params.normalize { raw_self(x, params)? } else { Vec::new() };
    let err = std::sync::Mutex::new(None);
    let mut out = Matrix::zeros(n, n);
    par::for_each_row_mut(out.as_mut_slice(), n, |i, row| {
        for j in 0..=i {
            let v = raw(x.item(i), x.item(j), params).and_then(|v| {
                if params.normalize {
                    normalized_entry(v, diag[i], diag[j])
                } else {
                    Ok(v)
                }
            });
            match v {
                Ok(v) => row[j] = v,
                Err(e) => {
                    err.lock().expect("error slot").get_or_insert(e);
                    return;
                }
            }
        }
    });
    if let Some(e) = err.into_inner().expect("error slot") {
        return Err(e);
    }
    let data = out.as_mut_slice();
    for i in 0..n {
        for j in i + 1..n {
            data[i * n + j] = data[j * n + i];
        }
    }
    Ok(out)
}

/// `K̂[i, j] = K[i, j] / sqrt(K[i, i] K[j, j])`.
pub fn normalize_kernel(k: &Matrix) -> Result<Matrix> {
    let n = k.rows();
    if k.cols() != n {
        return Err(Error::shape("kernel normalization needs a square matrix"));
    }
    let diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::numerical("kernel normalization needs a positive diagonal"));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            k[(i, j)] / (diag[i] * diag[j]).sqrt()
        }
    }))
}

/// `sqrt(k_aa + k_bb - 2 k_ab)` with small negative radicands clamped.
pub fn distance_from_kernels(kaa: f64, kbb: f64, kab: f64) -> Result<f64> {
    let r = kaa + kbb - 2.0 * kab;
    if r < -RADICAND_TOLERANCE || r.is_nan() {
        return Err(Error::numerical(format!(
            "kernel-induced distance radicand {r:e} is negative; the kernel is not positive definite"
        )));
    }
    Ok(r.max(0.0).sqrt())
}

/// Distance between `a` and `b` in the kernel's feature space.
pub fn kernel_induced_distance(a: Item<'_>, b: Item<'_>, params: &KernelParams) -> Result<f64> {
    distance_from_kernels(kernel(a, a, params)?, kernel(b, b, params)?, kernel(a, b, params)?)
}

/// Unnormalized self-similarity `k(a, a)`, for use with
/// [`induced_distance_cached`].
pub fn raw_self_kernel(a: Item<'_>, params: &KernelParams) -> Result<f64> {
    raw(a, a, params)
}

/// Kernel-induced distance from precomputed unnormalized self-similarities.
/// Costs one kernel evaluation. The radicand is clamped at 0 without the
/// tolerance check of [`distance_from_kernels`].
pub fn induced_distance_cached(
    a: Item<'_>,
    b: Item<'_>,
    kaa: f64,
    kbb: f64,
    params: &KernelParams,
) -> Result<f64> {
    let kab = raw(a, b, params)?;
    let r = if params.normalize {
        2.0 - 2.0 * normalized_entry(kab, kaa, kbb)?
    } else {
        kaa + kbb - 2.0 * kab
    };
    Ok(r.max(0.0).sqrt())
}

/// On-disk cache of a Gram matrix, keyed by a fingerprint of the kernel
/// parameters and the descriptor values it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCache {
    pub fingerprint: String,
    pub matrix: Matrix,
}

pub fn cache_fingerprint(x: &DescriptorBatch, params: &KernelParams) -> String {
    let mut parts: Vec<&[f64]> = Vec::new();
    let centers: Vec<f64>;
    match x {
        DescriptorBatch::Global(m) => parts.push(m.as_slice()),
        DescriptorBatch::Local(v) => {
            centers = v
                .iter()
                .flat_map(|d| d.center_elements.iter().map(|e| e.atomic_number() as f64))
                .collect();
            parts.extend(v.iter().map(|d| d.rows.as_slice()));
            parts.push(&centers);
        }
    }
    let data = fingerprint::of_floats(parts);
    fingerprint::of_json(&(params, x.kind_name(), data))
}

pub fn save_kernel_cache(cache: &KernelCache, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    bincode::serialize_into(BufWriter::new(file), cache)?;
    Ok(())
}

pub fn load_kernel_cache(path: impl AsRef<Path>) -> Result<KernelCache> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bincode::deserialize(&bytes)?)
}

/// [`gram_matrix`], reusing `path` when it holds a matrix with the same
/// fingerprint and refreshing it otherwise.
pub fn gram_matrix_cached(x: &DescriptorBatch, params: &KernelParams, path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let fp = cache_fingerprint(x, params);
    if path.exists() {
        match load_kernel_cache(path) {
            Ok(c) if c.fingerprint == fp => return Ok(c.matrix),
            Ok(_) => log::info!("kernel cache {} is stale, recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable kernel cache {}: {e}", path.display()),
        }
    }
    let matrix = gram_matrix(x, params)?;
    save_kernel_cache(
        &KernelCache {
            fingerprint: fp,
            matrix: matrix.clone(),
        },
        path,
    )?;
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Element;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn local(rows: Vec<Vec<f64>>, elements: Vec<Element>) -> LocalDescriptor {
        LocalDescriptor::new(Matrix::from_rows(&rows).unwrap(), elements, 7).unwrap()
    }

    fn random_local(rng: &mut ChaCha8Rng, n: usize, p: usize) -> LocalDescriptor {
        let pool = [Element::H, Element::C, Element::O];
        let rows = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let el = (0..n).map(|_| pool[rng.random_range(0..3)]).collect();
        local(rows, el)
    }

    #[test]
    fn rbf_values() {
        let a = [0.3, -1.0, 2.0];
        assert_eq!(rbf_kernel(&a, &a, 0.7).unwrap(), 1.0);
        assert_eq!(rbf_kernel(&[0.0], &[1e3], 1.0).unwrap(), 0.0);
        // ‖a - b‖² = 2σ² = 4.5 for σ = 1.5.
        let b = [0.3 + 4.5f64.sqrt(), -1.0, 2.0];
        let v = rbf_kernel(&a, &b, 1.5).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        assert!(matches!(rbf_kernel(&[1.0], &[1.0, 2.0], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn local_sum_basics() {
        let a = local(vec![vec![0.1, 0.2]], vec![Element::O]);
        assert_eq!(local_sum_kernel(&a, &a, 1.0).unwrap(), 1.0);
        let h = local(vec![vec![0.1, 0.2], vec![0.0, 0.0]], vec![Element::H, Element::H]);
        assert_eq!(local_sum_kernel(&a, &h, 1.0).unwrap(), 0.0);
        let mut other = a.clone();
        other.layout = 8;
        assert!(matches!(local_sum_kernel(&a, &other, 1.0), Err(Error::Config(_))));
        let p = KernelParams {
            cross_element: true,
            ..KernelParams::local(1.0)
        };
        assert!(kernel(Item::Local(&a), Item::Local(&h), &p).unwrap() > 0.0);
    }

    #[test]
    fn local_sum_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_local(&mut rng, 4, 3);
            let b = random_local(&mut rng, 6, 3);
            let ab = local_sum_kernel(&a, &b, 0.8).unwrap();
            let ba = local_sum_kernel(&b, &a, 0.8).unwrap();
            assert!((ab - ba).abs() <= 1e-14 * ab.abs().max(1.0));
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let g = [1.0, 2.0];
        let l = local(vec![vec![1.0, 2.0]], vec![Element::H]);
        assert!(kernel(Item::Global(&g), Item::Local(&l), &KernelParams::global(1.0)).is_err());
        assert!(kernel(Item::Global(&g), Item::Global(&g), &KernelParams::local(1.0)).is_err());
        assert!(KernelParams::global(0.0).validate().is_err());
    }

    #[test]
    fn gram_is_symmetric_with_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_fn(30, 4, |_, _| rng.random_range(-2.0..2.0));
        let b = DescriptorBatch::Global(x);
        let k = gram_matrix(&b, &KernelParams::global(1.3)).unwrap();
        assert!(k.is_symmetric());
        assert!((0..30).all(|i| k[(i, i)] == 1.0));
        let full = kernel_matrix(&b, &b, &KernelParams::global(1.3)).unwrap();
        for i in 0..30 {
            for j in 0..=i {
                assert_eq!(k[(i, j)], full[(i, j)]);
            }
        }
        let one = DescriptorBatch::Global(Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap());
        let two = DescriptorBatch::Global(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap());
        let m = kernel_matrix(&one, &two, &KernelParams::global(1.0)).unwrap();
        assert_eq!(m.as_slice(), &[(-0.5f64).exp()]);
    }

    fn min_eigen_oracle(k: &Matrix) -> f64 {
        let n = k.rows();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| k[(i, j)]);
        m.symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_fn(50, 6, |_, _| rng.random_range(-1.0..1.0));
        let k = gram_matrix(&DescriptorBatch::Global(x), &KernelParams::global(0.9)).unwrap();
        let trace: f64 = (0..50).map(|i| k[(i, i)]).sum();
        assert!(min_eigen_oracle(&k) >= -1e-8 * trace);

        let locals: Vec<_> = (0..25).map(|i| random_local(&mut rng, 2 + i % 5, 4)).collect();
        let b = DescriptorBatch::Local(locals);
        for p in [KernelParams::local(0.7), KernelParams::local(0.7).normalized()] {
            let k = gram_matrix(&b, &p).unwrap();
            assert!(k.is_symmetric());
            let trace: f64 = (0..25).map(|i| k[(i, i)]).sum();
            assert!(min_eigen_oracle(&k) >= -1e-8 * trace);
        }
    }

    #[test]
    fn normalization() {
        let k = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(normalize_kernel(&k).unwrap().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        let unit = Matrix::from_rows(&[vec![1.0, 0.25], vec![0.25, 1.0]]).unwrap();
        assert_eq!(normalize_kernel(&unit).unwrap(), unit);
        let bad = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(normalize_kernel(&bad), Err(Error::Numerical(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let locals: Vec<_> = (0..8).map(|_| random_local(&mut rng, 3, 2)).collect();
        let b = DescriptorBatch::Local(locals);
        let raw = gram_matrix(&b, &KernelParams::local(1.0)).unwrap();
        let direct = gram_matrix(&b, &KernelParams::local(1.0).normalized()).unwrap();
        let after = normalize_kernel(&raw).unwrap();
        for (x, y) in direct.as_slice().iter().zip(after.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((0..8).all(|i| after[(i, i)] == 1.0));
    }

    #[test]
    fn induced_distance_values() {
        let p = KernelParams::global(1.0);
        let a = [0.0, 0.0];
        assert_eq!(kernel_induced_distance(Item::Global(&a), Item::Global(&a), &p).unwrap(), 0.0);
        // ‖a - b‖² = 2 gives k = e^{-1}.
        let b = [1.0, 1.0];
        let d = kernel_induced_distance(Item::Global(&a), Item::Global(&b), &p).unwrap();
        let expected = (2.0 - 2.0 * (-1.0f64).exp()).sqrt();
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 1.1243848).abs() < 1e-7);
        assert_eq!(distance_from_kernels(1.0, 1.0, 1.0 + 2e-10).unwrap(), 0.0);
        assert!(matches!(distance_from_kernels(1.0, 1.0, 1.0 + 1e-8), Err(Error::Numerical(_))));
    }

    #[test]
    fn normalized_global_distance_ranks_like_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = KernelParams::global(0.8);
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pts: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut by_k: Vec<usize> = (0..40).collect();
        let mut by_d = by_k.clone();
        let k = |i: usize| kernel(Item::Global(&q), Item::Global(&pts[i]), &p).unwrap();
        let d = |i: usize| kernel_induced_distance(Item::Global(&q), Item::Global(&pts[i]), &p).unwrap();
        by_k.sort_by(|&a, &b| k(b).total_cmp(&k(a)));
        by_d.sort_by(|&a, &b| d(a).total_cmp(&d(b)));
        assert_eq!(by_k, by_d);
    }

    #[test]
    fn local_sum_nearest_differs_from_most_similar() {
        // The query matches `twin` exactly; `crowd` has ten atoms, each only
        // moderately similar, so its total similarity is larger while its
        // own self-similarity pushes it far away in feature space.
        let query = local(vec![vec![0.0, 0.0]], vec![Element::H]);
        let twin = local(vec![vec![0.0, 0.0]], vec![Element::H]);
        let crowd = local(vec![vec![1.0, 0.0]; 10], vec![Element::H; 10]);
        let p = KernelParams::local(1.0);
        let (q, t, c) = (Item::Local(&query), Item::Local(&twin), Item::Local(&crowd));
        assert!(kernel(q, c, &p).unwrap() > kernel(q, t, &p).unwrap());
        assert!(kernel_induced_distance(q, c, &p).unwrap() > kernel_induced_distance(q, t, &p).unwrap());
    }

    #[test]
    fn cache_round_trip_and_staleness() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        let x = DescriptorBatch::Global(Matrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64 * 0.1));
        let p = KernelParams::global(1.0);
        let first = gram_matrix_cached(&x, &p, &path).unwrap();
        let stored = load_kernel_cache(&path).unwrap();
        assert_eq!(stored.fingerprint, cache_fingerprint(&x, &p));
        assert_eq!(stored.matrix, first);
        let q = KernelParams::global(2.0);
        assert_ne!(cache_fingerprint(&x, &q), stored.fingerprint);
        let second = gram_matrix_cached(&x, &q, &path).unwrap();
        assert_ne!(first, second);
        assert_eq!(load_kernel_cache(&path).unwrap().fingerprint, cache_fingerprint(&x, &q));
    }
}
