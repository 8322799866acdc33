use nalgebra::{DMatrix, DVector};

use super::linalg::{nullspace, orth_complement, rank, solve_least_squares};
use crate::error::{Error, Result};
use crate::model::ExtReal;

/// Largest (equality-reduced) dimension handled by vertex enumeration.
pub const MAX_ENUM_DIM: usize = 8;
const MAX_SUBSETS: u128 = 4_000_000;
const FEAS_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-9;
const DET_TOL: f64 = 1e-11;

/// `{y : G y ≤ h, E y = d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    g: DMatrix<f64>,
    h: DVector<f64>,
    e: DMatrix<f64>,
    d: DVector<f64>,
}

fn check_rows(dim: usize, m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<()> {
    if m.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: m.ncols() });
    }
    if m.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: rhs.len() });
    }
    if m.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite polyhedron data".into()));
    }
    Ok(())
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols().max(b.ncols()));
    if a.nrows() > 0 {
        out.view_mut((0, 0), a.shape()).copy_from(a);
    }
    if b.nrows() > 0 {
        out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    }
    out
}

fn stack_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned())
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Lexicographic k-subsets of `0..n`.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in (i + 1)..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Normalizes inequality rows; returns `None` if a zero row is violated.
fn normalize(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..a.nrows() {
        let r = a.row(i);
        let n = r.norm();
        if n < 1e-14 {
            if b[i] < -FEAS_TOL * (1.0 + b[i].abs()) {
                return None;
            }
            continue;
        }
        rows.push(r / n);
        rhs.push(b[i] / n);
    }
    let k = a.ncols();
    let m = if rows.is_empty() { DMatrix::zeros(0, k) } else { DMatrix::from_rows(&rows) };
    Some((m, DVector::from_vec(rhs)))
}

fn feasible(a: &DMatrix<f64>, b: &DVector<f64>, s: &DVector<f64>) -> bool {
    let r = a * s;
    (0..b.len()).all(|i| r[i] - b[i] <= FEAS_TOL * (1.0 + b[i].abs()))
}

/// Basic feasible points of `{a s ≤ b}`, rows already normalized.
fn enumerate_basic(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let (p, k) = a.shape();
    if k == 0 {
        let z = DVector::zeros(0);
        return Ok(if feasible(a, b, &z) { vec![z] } else { vec![] });
    }
    if binom(p, k) > MAX_SUBSETS {
        return Err(Error::DimensionTooLarge { dim: p, limit: MAX_ENUM_DIM });
    }
    let mut out = Vec::new();
    for_each_subset(p, k, |rows| {
        let sub = select_rows(a, rows);
        let rhs = DVector::from_iterator(k, rows.iter().map(|&r| b[r]));
        let lu = sub.lu();
        if lu.determinant().abs() > DET_TOL {
            if let Some(s) = lu.solve(&rhs) {
                if feasible(a, b, &s) {
                    out.push(s);
                }
            }
        }
        true
    });
    Ok(out)
}

fn box_rows(k: usize, r: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut m = DMatrix::zeros(2 * k, k);
    for i in 0..k {
        m[(i, i)] = 1.0;
        m[(k + i, i)] = -1.0;
    }
    (m, DVector::from_element(2 * k, r))
}

const SNAP_GRID: f64 = 1048576.0;

fn round_key(v: &DVector<f64>) -> Vec<i64> {
    v.iter().map(|x| (x / DEDUP_TOL).round() as i64).collect()
}

fn dedup_sort(mut pts: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    for p in pts.iter_mut() {
        for x in p.iter_mut() {
            if x.abs() < 1e-12 {
                *x = 0.0;
            }
            // Remove solver roundoff around dyadic values such as 1 or 0.5.
            let snapped = (*x * SNAP_GRID).round() / SNAP_GRID;
            if (snapped - *x).abs() <= 1e-13 * (1.0 + x.abs()) {
                *x = snapped;
            }
        }
    }
    let mut out: Vec<DVector<f64>> = Vec::new();
    for p in pts {
        if !out.iter().any(|q| (q - &p).amax() <= DEDUP_TOL) {
            out.push(p);
        }
    }
    out.sort_by_key(round_key);
    out
}

/// Equality-reduced description `y = y0 + N s` with `a s ≤ b`.
struct Reduced {
    y0: DVector<f64>,
    basis: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Reduced {
    fn lift(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.y0 + &self.basis * s
    }
}

impl Polyhedron {
    pub fn new(
        dim: usize,
        g: DMatrix<f64>,
        h: DVector<f64>,
        e: DMatrix<f64>,
        d: DVector<f64>,
    ) -> Result<Self> {
        check_rows(dim, &g, &h)?;
        check_rows(dim, &e, &d)?;
        Ok(Polyhedron { dim, g, h, e, d })
    }

    pub fn whole(dim: usize) -> Self {
        Polyhedron {
            dim,
            g: DMatrix::zeros(0, dim),
            h: DVector::zeros(0),
            e: DMatrix::zeros(0, dim),
            d: DVector::zeros(0),
        }
    }

    pub fn from_inequalities(g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        let dim = g.ncols();
        Polyhedron::new(dim, g, h, DMatrix::zeros(0, dim), DVector::zeros(0))
    }

    /// `{lo ≤ y ≤ hi}`.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        let k = lo.len();
        let (m, _) = box_rows(k, 0.0);
        let rhs = DVector::from_iterator(2 * k, hi.iter().cloned().chain(lo.iter().map(|v| -v)));
        Polyhedron::from_inequalities(m, rhs)
    }

    /// `{‖y‖∞ ≤ r}`.
    pub fn cube(dim: usize, r: f64) -> Self {
        let (m, rhs) = box_rows(dim, r);
        Polyhedron::from_inequalities(m, rhs).expect("well-formed box")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn ineq_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }
    pub fn ineq_rhs(&self) -> &DVector<f64> {
        &self.h
    }
    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.e
    }
    pub fn eq_rhs(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn intersect(&self, other: &Polyhedron) -> Result<Polyhedron> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(Polyhedron {
            dim: self.dim,
            g: stack(&self.g, &other.g),
            h: stack_vec(&self.h, &other.h),
            e: stack(&self.e, &other.e),
            d: stack_vec(&self.d, &other.d),
        })
    }

    pub fn with_inequality(&self, row: &DVector<f64>, rhs: f64) -> Result<Polyhedron> {
        let p = Polyhedron::from_inequalities(DMatrix::from_row_slice(1, row.len(), row.as_slice()), DVector::from_vec(vec![rhs]))?;
        self.intersect(&p)
    }

    pub fn with_equality(&self, row: &DVector<f64>, rhs: f64) -> Result<Polyhedron> {
        let p = Polyhedron::new(
            self.dim,
            DMatrix::zeros(0, self.dim),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, row.len(), row.as_slice()),
            DVector::from_vec(vec![rhs]),
        )?;
        self.intersect(&p)
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        if self.g.nrows() > 0 {
            let r = &self.g * x - &self.h;
            v = r.iter().cloned().fold(v, f64::max);
        }
        if self.e.nrows() > 0 {
            let r = &self.e * x - &self.d;
            v = r.iter().map(|x| x.abs()).fold(v, f64::max);
        }
        v
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim && self.max_violation(x) <= tol
    }

    fn reduce(&self) -> Result<Option<Reduced>> {
        let (y0, basis) = if self.e.nrows() == 0 {
            (DVector::zeros(self.dim), DMatrix::identity(self.dim, self.dim))
        } else {
            let (y0, res) = solve_least_squares(&self.e, &self.d)?;
            if res > FEAS_TOL * (1.0 + self.d.norm()) {
                return Ok(None);
            }
            (y0, nullspace(&self.e))
        };
        let a = &self.g * &basis;
        let b = &self.h - &self.g * &y0;
        Ok(normalize(&a, &b).map(|(a, b)| Reduced { y0, basis, a, b }))
    }

    /// All vertices, deduplicated and sorted lexicographically. An empty
    /// polyhedron yields an empty list.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        let red = match self.reduce()? {
            Some(r) => r,
            None => return Ok(vec![]),
        };
        let k = red.basis.ncols();
        if k > MAX_ENUM_DIM {
            return Err(Error::DimensionTooLarge { dim: k, limit: MAX_ENUM_DIM });
        }
        let pts = enumerate_basic(&red.a, &red.b)?;
        if pts.is_empty() {
            // Either empty or containing a line: probe within a large box.
            let (bm, bb) = box_rows(k, 1e6);
            let probe = enumerate_basic(&stack(&red.a, &bm), &stack_vec(&red.b, &bb))?;
            if probe.is_empty() {
                return Ok(vec![]);
            }
            return Err(Error::Unbounded);
        }
        let (bm, bb) = box_rows(k, 1.0);
        let rec = enumerate_basic(
            &stack(&red.a, &bm),
            &stack_vec(&DVector::zeros(red.a.nrows()), &bb),
        )?;
        if rec.iter().any(|s| s.norm() > 1e-7) {
            return Err(Error::Unbounded);
        }
        Ok(dedup_sort(pts.iter().map(|s| red.lift(s)).collect()))
    }

    /// Feasibility test via the equality reduction and a large bounding box.
    pub fn is_empty(&self) -> Result<bool> {
        let boxed = self.intersect(&Polyhedron::cube(self.dim, 1e6))?;
        Ok(boxed.vertices()?.is_empty())
    }

    /// Maximizes `⟨c, y⟩`; the argmax is the lexicographically smallest optimal vertex.
    pub fn lp_max(&self, c: &DVector<f64>) -> Result<(ExtReal, DVector<f64>)> {
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: c.len() });
        }
        let vs = self.vertices()?;
        if vs.is_empty() {
            return Err(Error::EmptyPolyhedron);
        }
        let best = vs.iter().map(|v| c.dot(v)).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * (1.0 + best.abs());
        let arg = vs.into_iter().find(|v| c.dot(v) >= best - tol).expect("maximizer exists");
        Ok((ExtReal::Finite(c.dot(&arg)), arg))
    }

    /// Euclidean projection by enumeration of active sets.
    pub fn project(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.len() });
        }
        let red = self.reduce()?.ok_or(Error::EmptyPolyhedron)?;
        let st = red.basis.transpose() * (p - &red.y0);
        if feasible(&red.a, &red.b, &st) {
            return Ok(red.lift(&st));
        }
        let (rows, k) = red.a.shape();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for size in 1..=k.min(rows) {
            if binom(rows, size) > MAX_SUBSETS {
                return Err(Error::DimensionTooLarge { dim: k, limit: MAX_ENUM_DIM });
            }
            for_each_subset(rows, size, |set| {
                let a_s = select_rows(&red.a, set);
                let gram = &a_s * a_s.transpose();
                let lu = gram.lu();
                if lu.determinant().abs() <= DET_TOL {
                    return true;
                }
                let b_s = DVector::from_iterator(size, set.iter().map(|&r| red.b[r]));
                if let Some(mu) = lu.solve(&(&a_s * &st - b_s)) {
                    let s = &st - a_s.transpose() * mu;
                    if feasible(&red.a, &red.b, &s) {
                        let dist = (&s - &st).norm();
                        if best.as_ref().map_or(true, |(d, _)| dist < *d - 1e-15) {
                            best = Some((dist, s));
                        }
                    }
                }
                true
            });
        }
        best.map(|(_, s)| red.lift(&s)).ok_or(Error::EmptyPolyhedron)
    }

    /// `T_P(x) = {w : G_act w ≤ 0, E w = 0}`.
    pub fn tangent_cone(&self, x: &DVector<f64>, act_tol: f64) -> Result<PolyCone> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let viol = self.max_violation(x);
        if viol > act_tol {
            return Err(Error::PointNotInSet(viol));
        }
        let r = &self.g * x - &self.h;
        let active: Vec<usize> = (0..r.len()).filter(|&i| r[i] >= -act_tol).collect();
        Ok(PolyCone {
            dim: self.dim,
            g: select_rows(&self.g, &active),
            e: self.e.clone(),
        })
    }
}

/// `{w : G w ≤ 0, E w = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCone {
    dim: usize,
    g: DMatrix<f64>,
    e: DMatrix<f64>,
}

/// `K = span(lineality) + cone(rays)` with unit-norm rays.
#[derive(Debug, Clone)]
pub struct ConeGenerators {
    pub lineality: Vec<DVector<f64>>,
    pub rays: Vec<DVector<f64>>,
}

impl ConeGenerators {
    /// Dimension of the linear span of the cone.
    pub fn span_dim(&self, dim: usize) -> usize {
        let cols: Vec<DVector<f64>> =
            self.lineality.iter().chain(self.rays.iter()).cloned().collect();
        if cols.is_empty() {
            return 0;
        }
        let _ = dim;
        rank(&DMatrix::from_columns(&cols))
    }

    /// Unit directions that generate the cone: `±l` for lineality vectors and the rays.
    pub fn directions(&self) -> Vec<DVector<f64>> {
        let mut out = Vec::new();
        for l in &self.lineality {
            out.push(l.clone());
            out.push(-l);
        }
        out.extend(self.rays.iter().cloned());
        out
    }
}

impl PolyCone {
    pub fn new(dim: usize, g: DMatrix<f64>, e: DMatrix<f64>) -> Result<Self> {
        check_rows(dim, &g, &DVector::zeros(g.nrows()))?;
        check_rows(dim, &e, &DVector::zeros(e.nrows()))?;
        Ok(PolyCone { dim, g, e })
    }

    pub fn whole(dim: usize) -> Self {
        PolyCone { dim, g: DMatrix::zeros(0, dim), e: DMatrix::zeros(0, dim) }
    }

    pub fn zero(dim: usize) -> Self {
        PolyCone { dim, g: DMatrix::zeros(0, dim), e: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn ineq_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }
    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn as_polyhedron(&self) -> Polyhedron {
        Polyhedron {
            dim: self.dim,
            g: self.g.clone(),
            h: DVector::zeros(self.g.nrows()),
            e: self.e.clone(),
            d: DVector::zeros(self.e.nrows()),
        }
    }

    /// Membership with tolerance relative to `‖w‖`.
    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        w.len() == self.dim && self.as_polyhedron().max_violation(w) <= tol * (1.0 + w.norm())
    }

    pub fn intersect(&self, other: &PolyCone) -> Result<PolyCone> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(PolyCone { dim: self.dim, g: stack(&self.g, &other.g), e: stack(&self.e, &other.e) })
    }

    pub fn with_equality(&self, row: &DVector<f64>) -> Result<PolyCone> {
        self.intersect(&PolyCone::new(self.dim, DMatrix::zeros(0, self.dim), DMatrix::from_row_slice(1, row.len(), row.as_slice()))?)
    }

    /// `{w : J w ∈ K}` for `J: R^n → R^dim`.
    pub fn pullback(&self, j: &DMatrix<f64>) -> Result<PolyCone> {
        if j.nrows() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: j.nrows() });
        }
        Ok(PolyCone { dim: j.ncols(), g: &self.g * j, e: &self.e * j })
    }

    /// `T_K(w)`, which for a polyhedral cone keeps the rows active at `w`.
    pub fn tangent_cone(&self, w: &DVector<f64>, act_tol: f64) -> Result<PolyCone> {
        self.as_polyhedron().tangent_cone(w, act_tol)
    }

    pub fn project(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.as_polyhedron().project(w)
    }

    /// Lineality basis and extreme rays.
    pub fn generators(&self) -> Result<ConeGenerators> {
        let n = self.dim;
        let all = stack(&self.g, &self.e);
        let lin = nullspace(&all);
        let lineality: Vec<DVector<f64>> =
            (0..lin.ncols()).map(|i| lin.column(i).into_owned()).collect();
        let n_e = if self.e.nrows() == 0 { DMatrix::identity(n, n) } else { nullspace(&self.e) };
        let gn = &self.g * &n_e;
        let lin_c = nullspace(&gn);
        let m = orth_complement(&lin_c, n_e.ncols());
        let k = m.ncols();
        let a_raw = &gn * &m;
        let (a, _) = normalize(&a_raw, &DVector::zeros(a_raw.nrows())).expect("homogeneous rows");
        let lift = &n_e * &m;
        let ok = |d: &DVector<f64>| (&a * d).iter().all(|&x| x <= 1e-9);
        let mut rays: Vec<DVector<f64>> = Vec::new();
        let push = |d: DVector<f64>, rays: &mut Vec<DVector<f64>>| {
            let w = &lift * d;
            let nw = w.norm();
            if nw < 1e-12 {
                return;
            }
            let w = w / nw;
            if !rays.iter().any(|r| (r - &w).amax() <= 1e-9) {
                rays.push(w);
            }
        };
        if k == 1 {
            for s in [1.0, -1.0] {
                let d = DVector::from_element(1, s);
                if ok(&d) {
                    push(d, &mut rays);
                }
            }
        } else if k >= 2 {
            let p = a.nrows();
            if binom(p, k - 1) > MAX_SUBSETS {
                return Err(Error::DimensionTooLarge { dim: k, limit: MAX_ENUM_DIM });
            }
            let mut found = Vec::new();
            for_each_subset(p, k - 1, |set| {
                let ns = nullspace(&select_rows(&a, set));
                if ns.ncols() == 1 {
                    let r = ns.column(0).into_owned();
                    for s in [1.0, -1.0] {
                        let d = &r * s;
                        if ok(&d) {
                            found.push(d);
                        }
                    }
                }
                true
            });
            for d in found {
                push(d, &mut rays);
            }
        }
        for r in rays.iter_mut() {
            for x in r.iter_mut() {
                if x.abs() < 1e-13 {
                    *x = 0.0;
                }
            }
        }
        rays.sort_by_key(round_key);
        Ok(ConeGenerators { lineality, rays })
    }

    /// `K° = {y : ⟨y, w⟩ ≤ 0 ∀ w ∈ K}`.
    pub fn polar(&self) -> Result<PolyCone> {
        let gens = self.generators()?;
        let g = if gens.rays.is_empty() {
            DMatrix::zeros(0, self.dim)
        } else {
            DMatrix::from_rows(&gens.rays.iter().map(|r| r.transpose()).collect::<Vec<_>>())
        };
        let e = if gens.lineality.is_empty() {
            DMatrix::zeros(0, self.dim)
        } else {
            DMatrix::from_rows(&gens.lineality.iter().map(|r| r.transpose()).collect::<Vec<_>>())
        };
        Ok(PolyCone { dim: self.dim, g, e })
    }

    /// True if the cone is `{0}`.
    pub fn is_trivial(&self) -> Result<bool> {
        let gens = self.generators()?;
        Ok(gens.rays.is_empty() && gens.lineality.is_empty())
    }
}

/// See [`Polyhedron::vertices`].
pub fn vertices(p: &Polyhedron) -> Result<Vec<DVector<f64>>> {
    p.vertices()
}

/// See [`Polyhedron::lp_max`].
pub fn lp_max(c: &DVector<f64>, p: &Polyhedron) -> Result<(ExtReal, DVector<f64>)> {
    p.lp_max(c)
}

/// See [`Polyhedron::tangent_cone`].
pub fn tangent_cone(p: &Polyhedron, x: &DVector<f64>, act_tol: f64) -> Result<PolyCone> {
    p.tangent_cone(x, act_tol)
}
