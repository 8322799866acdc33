use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkit::PolyCone;

/// Tolerance for critical-cone membership, relative to `1 + ‖w‖`.
pub const CONE_TOL: f64 = 1e-8;

pub type ConeTest = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;
pub type ConeProjector = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A cone known only through a membership closure, optionally with a
/// Euclidean projector.
#[derive(Clone)]
pub struct ConePredicate {
    pub description: String,
    pub dim: usize,
    pub(crate) test: ConeTest,
    pub(crate) project: Option<ConeProjector>,
}

impl fmt::Debug for ConePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConePredicate")
            .field("description", &self.description)
            .field("dim", &self.dim)
            .field("has_projector", &self.project.is_some())
            .finish()
    }
}

impl ConePredicate {
    pub fn new(
        description: impl Into<String>,
        dim: usize,
        test: ConeTest,
        project: Option<ConeProjector>,
    ) -> Self {
        ConePredicate { description: description.into(), dim, test, project }
    }
}

/// The critical cone `K = {w : d g(z)(w) = ⟨y, w⟩}`.
#[derive(Debug, Clone)]
pub enum CriticalConeRepr {
    Cone(PolyCone),
    Predicate(ConePredicate),
}

impl CriticalConeRepr {
    pub fn dim(&self) -> usize {
        match self {
            CriticalConeRepr::Cone(c) => c.dim(),
            CriticalConeRepr::Predicate(p) => p.dim,
        }
    }

    pub fn contains(&self, w: &DVector<f64>) -> bool {
        match self {
            CriticalConeRepr::Cone(c) => c.contains(w, CONE_TOL),
            CriticalConeRepr::Predicate(p) => w.len() == p.dim && (p.test)(w),
        }
    }

    /// Nearest point of the cone, when a projector is available.
    pub fn project(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            CriticalConeRepr::Cone(c) => c.project(w).ok(),
            CriticalConeRepr::Predicate(p) => p.project.as_ref().map(|f| f(w)),
        }
    }

    pub fn as_cone(&self) -> Option<&PolyCone> {
        match self {
            CriticalConeRepr::Cone(c) => Some(c),
            CriticalConeRepr::Predicate(_) => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CriticalConeRepr::Cone(c) => describe_cone(c),
            CriticalConeRepr::Predicate(p) => p.description.clone(),
        }
    }

    /// `{w : J w ∈ K}`.
    pub fn pullback(&self, j: &DMatrix<f64>) -> Result<CriticalConeRepr> {
        if j.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: j.nrows() });
        }
        match self {
            CriticalConeRepr::Cone(c) => Ok(CriticalConeRepr::Cone(c.pullback(j)?)),
            CriticalConeRepr::Predicate(p) => {
                let jt = j.clone();
                let inner = p.test.clone();
                let test: ConeTest = Arc::new(move |w: &DVector<f64>| inner(&(&jt * w)));
                let project = p.project.clone().map(|proj| {
                    let jp = j.clone();
                    Arc::new(move |w: &DVector<f64>| pullback_project(&jp, &proj, w))
                        as ConeProjector
                });
                Ok(CriticalConeRepr::Predicate(ConePredicate {
                    description: format!("{{w : ∇F(x)w ∈ K}} where K = {}", p.description),
                    dim: j.ncols(),
                    test,
                    project,
                }))
            }
        }
    }
}

fn fmt_row(r: &[f64]) -> String {
    let terms: Vec<String> = r
        .iter()
        .enumerate()
        .filter(|(_, &c)| c.abs() > 1e-12)
        .map(|(i, &c)| {
            if (c - 1.0).abs() < 1e-12 {
                format!("w{}", i + 1)
            } else if (c + 1.0).abs() < 1e-12 {
                format!("-w{}", i + 1)
            } else {
                format!("{:.6}·w{}", c, i + 1)
            }
        })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" + ")
    }
}

/// Human-readable H-representation such as `{w : w2 = 0}`.
pub fn describe_cone(c: &PolyCone) -> String {
    let mut parts = Vec::new();
    for i in 0..c.eq_matrix().nrows() {
        let r: Vec<f64> = c.eq_matrix().row(i).iter().cloned().collect();
        if r.iter().any(|x| x.abs() > 1e-12) {
            parts.push(format!("{} = 0", fmt_row(&r)));
        }
    }
    for i in 0..c.ineq_matrix().nrows() {
        let r: Vec<f64> = c.ineq_matrix().row(i).iter().cloned().collect();
        if r.iter().any(|x| x.abs() > 1e-12) {
            parts.push(format!("{} <= 0", fmt_row(&r)));
        }
    }
    if parts.is_empty() {
        format!("R^{}", c.dim())
    } else {
        format!("{{w : {}}}", parts.join(", "))
    }
}

/// Projection onto `{w : J w ∈ K}` by Dykstra's alternating projections on the
/// graph `{(w, u) : u = J w}` and `R^n × K`.
pub fn pullback_project(j: &DMatrix<f64>, proj: &ConeProjector, w0: &DVector<f64>) -> DVector<f64> {
    let n = j.ncols();
    let m = j.nrows();
    let gram = DMatrix::identity(n, n) + j.transpose() * j;
    let chol = gram.cholesky().expect("I + JᵀJ is positive definite");
    let onto_graph = |a: &DVector<f64>, b: &DVector<f64>| {
        let w = chol.solve(&(a + j.transpose() * b));
        let u = j * &w;
        (w, u)
    };
    let mut xa = w0.clone();
    let mut xb = j * w0;
    let (mut pa, mut pb) = (DVector::zeros(n), DVector::zeros(m));
    let (mut qa, mut qb) = (DVector::zeros(n), DVector::zeros(m));
    let mut ya = w0.clone();
    let scale = 1.0 + w0.norm();
    for _ in 0..20_000 {
        let (na, nb) = onto_graph(&(&xa + &pa), &(&xb + &pb));
        pa = &xa + &pa - &na;
        pb = &xb + &pb - &nb;
        ya = na;
        let yb = nb;
        let za = &ya + &qa;
        let zb_in = &yb + &qb;
        let zb = proj(&zb_in);
        qa = &ya + &qa - &za;
        qb = &zb_in - &zb;
        let gap = (&za - &ya).norm() + (&zb - &yb).norm();
        xa = za;
        xb = zb;
        if gap <= 1e-13 * scale {
            break;
        }
    }
    ya
}
