use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for rank decisions.
const RANK_TOL: f64 = 1e-10;

fn padded_svd(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    // Pad with zero rows so that the SVD returns a full right basis.
    let (r, c) = m.shape();
    let rows = r.max(c);
    let mut a = DMatrix::zeros(rows, c);
    a.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    (svd.singular_values, vt)
}

fn cutoff(s: &DVector<f64>) -> f64 {
    let smax = s.iter().cloned().fold(0.0, f64::max);
    RANK_TOL * smax.max(1.0)
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn nullspace(m: &DMatrix<f64>) -> DMatrix<f64> {
    let c = m.ncols();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let (s, vt) = padded_svd(m);
    let tol = cutoff(&s);
    let cols: Vec<DVector<f64>> = (0..c)
        .filter(|&i| s[i] <= tol)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Numerical rank of `m`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let (s, _) = padded_svd(m);
    let tol = cutoff(&s);
    s.iter().filter(|&&x| x > tol).count()
}

/// Orthonormal basis of the orthogonal complement of the column span of `b` in R^n.
pub fn orth_complement(b: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if b.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    nullspace(&b.transpose())
}

/// Spectral norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

/// Minimum-norm least-squares solution of `a x = b`, with its residual norm.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
    }
    if a.ncols() == 0 {
        return Ok((DVector::zeros(0), b.norm()));
    }
    if a.nrows() == 0 {
        return Ok((DVector::zeros(a.ncols()), 0.0));
    }
    let svd = a.clone().svd(true, true);
    let tol = cutoff(&svd.singular_values);
    let x = svd
        .solve(b, tol)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let res = (a * &x - b).norm();
    Ok((x, res))
}
