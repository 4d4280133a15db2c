//! Small dense helpers on row-major complex buffers, backed by faer.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) fn to_faer(n: usize, data: &[C64]) -> Mat<C64> {
    Mat::from_fn(n, n, |i, j| data[i * n + j])
}

/// Copy scaled to unit max-norm with entries below 1e-250 flushed to zero.
/// Subnormal entries (deep Fock tails) stall the QR sweeps otherwise.
fn flushed(n: usize, data: &[C64]) -> (Mat<C64>, f64) {
    let scale = data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return (to_faer(n, data), 1.0);
    }
    let m = Mat::from_fn(n, n, |i, j| {
        let z = data[i * n + j] / scale;
        if z.norm() < 1e-250 {
            C64::new(0.0, 0.0)
        } else {
            z
        }
    });
    (m, scale)
}

/// Eigenvalues (ascending) and row-major eigenvector matrix (columns are
/// eigenvectors) of a Hermitian matrix.
pub fn hermitian_eigen(n: usize, data: &[C64]) -> Result<(Vec<f64>, Vec<C64>)> {
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let (m, scale) = flushed(n, data);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("Hermitian eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|k| s[k].re * scale).collect();
    let mut vecs = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            vecs[i * n + j] = u[(i, j)];
        }
    }
    Ok((vals, vecs))
}

pub fn hermitian_eigenvalues(n: usize, data: &[C64]) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let (m, scale) = flushed(n, data);
    let vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Solver(format!("Hermitian eigensolver: {e:?}")))?;
    Ok(vals.into_iter().map(|v| v * scale).collect())
}

/// Row-major dense product of square matrices.
pub fn matmul(n: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

pub fn adjoint(n: usize, a: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j].conj();
        }
    }
    out
}

/// Sparse LU factorization of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
}

impl SparseLu {
    pub fn new(m: &crate::hilbert::SparseMatrix) -> Result<Self> {
        use faer::sparse::{SparseColMat, Triplet};
        let (n, c) = m.shape();
        if n != c {
            return Err(Error::Shape(format!("LU of a non-square {n}x{c} matrix")));
        }
        let triplets: Vec<Triplet<usize, usize, C64>> =
            m.iter().map(|(row, col, val)| Triplet { row, col, val }).collect();
        let a = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Solver(format!("sparse assembly: {e:?}")))?;
        let lu = a.sp_lu().map_err(|e| Error::Solver(format!("sparse LU: {e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        use faer::linalg::solvers::Solve;
        let mut b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        (0..self.n).map(|i| b[(i, 0)]).collect()
    }
}
