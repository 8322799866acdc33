use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A real symmetric matrix. Symmetry is exact: construction either checks it
/// or enforces it by averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Accepts only exactly symmetric, finite, square input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
        }
        if n == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({}, {})",
                        i, j
                    )));
                }
            }
        }
        Ok(SymMatrix { m })
    }

    /// Symmetrizes `(m + mᵀ)/2`.
    pub fn symmetrize(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = m[(i, i)];
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        SymMatrix { m: s }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
        if flat.len() != n * n {
            return Err(Error::InvalidInput("matrix rows must form a square".into()));
        }
        SymMatrix::new(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn diag(d: &[f64]) -> Self {
        SymMatrix { m: DMatrix::from_diagonal(&DVector::from_column_slice(d)) }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix { m: DMatrix::identity(n, n) }
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix { m: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.m.dot(&other.m)
    }

    /// `⟨B w, w⟩`.
    pub fn quad(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.m * w))
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m + &other.m }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix { m: &self.m * s }
    }

    /// `Bᵀ self B`, symmetrized against rounding.
    pub fn congruence(&self, b: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrize(&(b.transpose() * &self.m * b))
    }
}

/// Eigendecomposition with eigenvalues in decreasing order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Columns `range` of Q.
    pub fn basis(&self, range: std::ops::Range<usize>) -> DMatrix<f64> {
        self.vectors.columns(range.start, range.len()).into_owned()
    }
}

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Eigenvalues are sorted in decreasing
/// order; each eigenvector is oriented so its first non-negligible component
/// is positive.
pub fn sym_eig(a: &SymMatrix) -> SymEig {
    let n = a.n();
    let mut m = a.m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.frobenius();
    // Rotations continue past the 1e-12 target while they still change the
    // matrix; the extra sweeps are cheap and tighten small eigenvalues.
    let target = JACOBI_REL_TOL * scale;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[(p, q)] * m[(p, q)];
            }
        }
        let off = off.sqrt();
        if off == 0.0 || (off <= target && off <= 1e-15 * scale) {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                if apq.abs() < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let mut col = v.column(i).into_owned();
        let lead = col.iter().cloned().find(|x| x.abs() > 1e-8).unwrap_or(0.0);
        if lead < 0.0 {
            col = -col;
        }
        vectors.set_column(c, &col);
    }
    SymEig { values, vectors }
}

/// Pseudoinverse: eigenvalues with `|λ| ≤ cutoff` map to zero, others to `1/λ`.
pub fn pinv(a: &SymMatrix, cutoff: f64) -> SymMatrix {
    let e = sym_eig(a);
    let inv: Vec<f64> = e
        .values
        .iter()
        .map(|&l| if l.abs() <= cutoff { 0.0 } else { 1.0 / l })
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(inv));
    SymMatrix::symmetrize(&(&e.vectors * d * e.vectors.transpose()))
}

/// Pseudoinverse with cutoff `1e-10·max(1, ‖A‖_F)`.
pub fn pinv_default(a: &SymMatrix) -> SymMatrix {
    pinv(a, 1e-10 * a.frobenius().max(1.0))
}

/// Groups consecutive (descending) eigenvalues into clusters whose adjacent
/// gaps are at most `gap_tol`.
pub fn clusters(values: &[f64], gap_tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i - 1] - values[i] > gap_tol {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

/// Length of the canonical vectorization of an order-`n` symmetric matrix.
pub fn svec_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Matrix order for a vectorization of length `m`, if `m` is triangular.
pub fn sym_order(m: usize) -> Option<usize> {
    let n = ((((8 * m + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (svec_dim(n) == m && n > 0).then_some(n)
}

/// Isometric vectorization: upper triangle row by row, off-diagonal entries
/// scaled by √2, so that `svec(A)·svec(B) = ⟨A, B⟩`.
pub fn svec(a: &SymMatrix) -> DVector<f64> {
    let n = a.n();
    let mut out = Vec::with_capacity(svec_dim(n));
    for i in 0..n {
        for j in i..n {
            let v = a.m[(i, j)];
            out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`svec`].
pub fn smat(v: &DVector<f64>) -> Result<SymMatrix> {
    let n = sym_order(v.len()).ok_or(Error::InvalidInput(format!(
        "length {} is not a symmetric-matrix vectorization",
        v.len()
    )))?;
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                let x = v[k] / std::f64::consts::SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    Ok(SymMatrix { m })
}
