//! Dense factorizations, backed by faer.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// LLᵀ factorization of `K + shift·I`.
pub struct Cholesky {
    llt: Llt<f64>,
    n: usize,
}

impl Cholesky {
    /// Factors `k + shift·I`. `k` must be symmetric; only its lower triangle
    /// is read.
    pub fn factor(k: &Matrix, shift: f64) -> Result<Self> {
        let n = k.rows();
        if k.cols() != n {
            return Err(Error::shape(format!("cannot factor a {}x{} matrix", k.rows(), k.cols())));
        }
        let a = Mat::<f64>::from_fn(n, n, |i, j| if i == j { k[(i, j)] + shift } else { k[(i, j)] });
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::numerical(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Cholesky { llt, n })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::shape(format!(
                "right-hand side of length {} for a system of size {}",
                rhs.len(),
                self.n
            )));
        }
        let mut b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.llt.solve_in_place(b.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| b[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("Cholesky solve produced non-finite values"));
        }
        Ok(x)
    }
}

/// Solves `(K + shift·I) x = rhs` by LLᵀ factorization.
pub fn cholesky_solve_shifted(k: &Matrix, shift: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != k.rows() {
        return Err(Error::shape(format!(
            "system {}x{} with right-hand side of length {}",
            k.rows(),
            k.cols(),
            rhs.len()
        )));
    }
    Cholesky::factor(k, shift)?.solve(rhs)
}

/// Eigen-decomposition of a symmetric matrix. Eigenvalues are returned in
/// ascending order; column `c` of the returned matrix is the eigenvector
/// for eigenvalue `c`.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::shape("eigen-decomposition needs a square matrix"));
    }
    let a = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numerical(format!("eigen-decomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values = (0..n).map(|i| s[i]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| u[(i, j)]);
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let k = Matrix::from_vec(2, 2, vec![4.0, 1.0, 1.0, 3.0]).unwrap();
        let x = cholesky_solve_shifted(&k, 0.0, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let k = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            cholesky_solve_shifted(&k, 0.0, &[1.0, 1.0]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn eigenvalues_ascending() {
        let m = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        let v = [vecs[(0, 1)], vecs[(1, 1)]];
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-12);
    }
}
