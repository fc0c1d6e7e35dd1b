//! Dense helpers shared by the GRF and selection code.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Principal submatrix on `idx` (rows and columns, in the given order).
pub(crate) fn principal<T: Scalar>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

pub(crate) fn block<T: Scalar>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

pub(crate) fn cholesky<T: Scalar>(m: DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    Cholesky::new(m).ok_or_else(|| {
        Error::Singular(format!(
            "{what} is not positive definite; regularize the Laplacian or delete a node"
        ))
    })
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub(crate) fn spd_inverse<T: Scalar>(m: DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    if m.nrows() == 0 {
        return Ok(m);
    }
    let inv = cholesky(m, what)?.inverse();
    Ok(symmetrize(inv))
}

pub(crate) fn symmetrize<T: Scalar>(mut m: DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Removes row and column `k` from a square matrix.
pub(crate) fn remove_index<T: Scalar>(m: DMatrix<T>, k: usize) -> DMatrix<T> {
    m.remove_row(k).remove_column(k)
}
