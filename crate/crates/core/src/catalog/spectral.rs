use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::cone::{ConePredicate, ConeProjector, ConeTest, CriticalConeRepr, CONE_TOL};
use super::{OuterFunction, SUBGRAD_TOL};
use crate::error::{Error, Result};
use crate::model::{ExtReal, GridSchedule};
use crate::numkit::{clusters, smat, svec, sym_eig, PolyCone, SymEig, SymMatrix};

/// Eigenstructure of a symmetric matrix with the clustering rule
/// `gap_tol = 1e-8·(1 + ‖A‖_F)`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub a: SymMatrix,
    pub eig: SymEig,
    pub clusters: Vec<Range<usize>>,
    pub gap_tol: f64,
}

impl Spectrum {
    pub fn new(z: &DVector<f64>) -> Result<Self> {
        let a = smat(z)?;
        Ok(Spectrum::of(a))
    }

    pub fn of(a: SymMatrix) -> Self {
        let eig = sym_eig(&a);
        let gap_tol = 1e-8 * (1.0 + a.frobenius());
        let clusters = clusters(&eig.values, gap_tol);
        Spectrum { a, eig, clusters, gap_tol }
    }

    pub fn cluster_of(&self, pos: usize) -> Range<usize> {
        self.clusters.iter().find(|c| c.contains(&pos)).cloned().expect("position in range")
    }

    /// Indices of eigenvalues within `gap_tol` of zero.
    pub fn kernel(&self) -> Range<usize> {
        let idx: Vec<usize> = (0..self.eig.values.len())
            .filter(|&i| self.eig.values[i].abs() <= self.gap_tol)
            .collect();
        match (idx.first(), idx.last()) {
            (Some(&s), Some(&e)) => s..e + 1,
            _ => 0..0,
        }
    }

    /// `Σ_{j ∉ skip} q_j q_jᵀ / (mu − λ_j)`: the pseudoinverse of `mu·I − A`
    /// with the cluster `skip` treated as exactly singular.
    pub fn shifted_pinv(&self, mu: f64, skip: &Range<usize>) -> SymMatrix {
        let n = self.a.n();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            if skip.contains(&j) {
                continue;
            }
            let q = self.eig.vector(j);
            m += (&q * q.transpose()) / (mu - self.eig.values[j]);
        }
        SymMatrix::symmetrize(&m)
    }

    /// `Σ_{p < k} q_p q_pᵀ`.
    pub fn top_projector(&self, k: usize) -> SymMatrix {
        let b = self.eig.basis(0..k);
        SymMatrix::symmetrize(&(&b * b.transpose()))
    }
}

/// `{fixed + E Θ Eᵀ : Θ ⪰ 0, [Θ ⪯ I], [tr Θ = trace]}`.
#[derive(Debug, Clone)]
pub struct SpectralFace {
    pub order: usize,
    pub fixed: SymMatrix,
    pub basis: DMatrix<f64>,
    pub trace: Option<f64>,
    pub upper_identity: bool,
}

impl SpectralFace {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn param_dim(&self) -> usize {
        let r = self.rank();
        r * (r + 1) / 2
    }

    /// `svec(Eᵀ (smat(y) − fixed) E)` and the part of `smat(y) − fixed` outside span E.
    fn theta_and_residual(&self, y: &DVector<f64>) -> Option<(SymMatrix, f64, f64)> {
        let ym = smat(y).ok()?;
        if ym.n() != self.order {
            return None;
        }
        let d = ym.add(&self.fixed.scale(-1.0));
        if self.rank() == 0 {
            return Some((SymMatrix::zeros(1), d.frobenius(), d.frobenius()));
        }
        let theta = d.congruence(&self.basis);
        let back = &self.basis * theta.matrix() * self.basis.transpose();
        Some((theta, (d.matrix() - back).norm(), d.frobenius()))
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        let Some((theta, res, scale)) = self.theta_and_residual(y) else { return false };
        if self.rank() == 0 {
            return res <= SUBGRAD_TOL * (1.0 + self.fixed.frobenius());
        }
        if res > 1e-6 * (1.0 + scale) {
            return false;
        }
        self.theta_ok(&theta, SUBGRAD_TOL)
    }

    pub fn theta_ok(&self, theta: &SymMatrix, tol: f64) -> bool {
        let e = sym_eig(theta);
        let lo = *e.values.last().expect("nonempty");
        if lo < -tol {
            return false;
        }
        if self.upper_identity && e.values[0] > 1.0 + tol {
            return false;
        }
        if let Some(c) = self.trace {
            let tr: f64 = e.values.iter().sum();
            if (tr - c).abs() > tol {
                return false;
            }
        }
        true
    }

    /// The element when the face is a singleton by its constraints alone.
    pub fn unique_element(&self) -> Option<DVector<f64>> {
        let r = self.rank();
        if r == 0 {
            return Some(svec(&self.fixed));
        }
        if self.upper_identity && self.trace == Some(r as f64) {
            let p = &self.basis * self.basis.transpose();
            return Some(svec(&self.fixed.add(&SymMatrix::symmetrize(&p))));
        }
        None
    }

    /// `svec(fixed + E smat(θ) Eᵀ)`.
    pub fn element(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let t = smat(theta)?;
        let m = &self.basis * t.matrix() * self.basis.transpose();
        Ok(svec(&self.fixed.add(&SymMatrix::symmetrize(&m))))
    }
}

/// Multiplicity data for the eigenvalue-sum tags.
struct SumStructure {
    /// Eigenvalues strictly above the cluster that enter the smooth part.
    smooth: usize,
    cluster: Range<usize>,
    ell: usize,
    pos: usize,
}

fn sum_structure(g: &OuterFunction, s: &Spectrum) -> Result<SumStructure> {
    match *g {
        OuterFunction::MaxEig { .. } => Ok(SumStructure { smooth: 0, cluster: s.cluster_of(0), ell: 1, pos: 0 }),
        OuterFunction::AlphaEig { index, ell, .. } => {
            let c = s.cluster_of(index - 1);
            let actual = index - c.start;
            if actual != ell {
                return Err(Error::MultiplicityMismatch(index));
            }
            Ok(SumStructure { smooth: 0, cluster: c, ell, pos: index - 1 })
        }
        OuterFunction::SumTopEig { count, .. } => {
            let c = s.cluster_of(count - 1);
            Ok(SumStructure { smooth: c.start, ell: count - c.start, cluster: c, pos: count - 1 })
        }
        _ => unreachable!("not an eigenvalue-sum tag"),
    }
}

fn sigma(values: &[f64], k: usize) -> f64 {
    values[..k].iter().sum()
}

pub(super) fn eval(g: &OuterFunction, z: &DVector<f64>) -> Result<ExtReal> {
    let a = smat(z)?;
    let e = sym_eig(&a);
    let v = &e.values;
    Ok(match *g {
        OuterFunction::IndNegSemidef { .. } => {
            if v[0] <= 1e-12 * (1.0 + a.frobenius()) { ExtReal::Finite(0.0) } else { ExtReal::PlusInf }
        }
        OuterFunction::MaxEig { .. } => ExtReal::Finite(v[0]),
        OuterFunction::SumTopEig { count, .. } => ExtReal::Finite(sigma(v, count)),
        OuterFunction::AlphaEig { index, ell, .. } => {
            ExtReal::Finite(v[index - ell..index].iter().sum())
        }
        _ => unreachable!("not a spectral tag"),
    })
}

pub(super) fn subdiff(g: &OuterFunction, z: &DVector<f64>) -> Result<SpectralFace> {
    let s = Spectrum::new(z)?;
    let order = s.a.n();
    match g {
        OuterFunction::IndNegSemidef { .. } => Ok(SpectralFace {
            order,
            fixed: SymMatrix::zeros(order),
            basis: s.eig.basis(s.kernel()),
            trace: None,
            upper_identity: false,
        }),
        _ => {
            let st = sum_structure(g, &s)?;
            Ok(SpectralFace {
                order,
                fixed: if st.smooth > 0 { s.top_projector(st.smooth) } else { SymMatrix::zeros(order) },
                basis: s.eig.basis(st.cluster.clone()),
                trace: Some(st.ell as f64),
                upper_identity: true,
            })
        }
    }
}

fn sigma_of(m: &SymMatrix, k: usize) -> f64 {
    sigma(&sym_eig(m).values, k)
}

fn dsum(s: &Spectrum, st: &SumStructure, w: &SymMatrix) -> f64 {
    let e = s.eig.basis(st.cluster.clone());
    let mut val = sigma_of(&w.congruence(&e), st.ell);
    for p in 0..st.smooth {
        val += w.quad(&s.eig.vector(p));
    }
    val
}

pub(super) fn subderivative(g: &OuterFunction, z: &DVector<f64>, w: &DVector<f64>) -> Result<ExtReal> {
    let s = Spectrum::new(z)?;
    let wm = smat(w)?;
    match g {
        OuterFunction::IndNegSemidef { .. } => Ok(if negsemidef_tangent(&s, &wm) {
            ExtReal::Finite(0.0)
        } else {
            ExtReal::PlusInf
        }),
        _ => {
            let st = sum_structure(g, &s)?;
            Ok(ExtReal::Finite(dsum(&s, &st, &wm)))
        }
    }
}

fn negsemidef_tangent(s: &Spectrum, w: &SymMatrix) -> bool {
    let k = s.kernel();
    if k.is_empty() {
        return true;
    }
    let m = w.congruence(&s.eig.basis(k));
    sym_eig(&m).values[0] <= CONE_TOL * (1.0 + w.frobenius())
}

pub(super) fn negsemidef_tangent_contains(z: &DVector<f64>, w: &DVector<f64>) -> Result<bool> {
    let s = Spectrum::new(z)?;
    Ok(negsemidef_tangent(&s, &smat(w)?))
}

fn critical_tol(w: &SymMatrix, v: &SymMatrix) -> f64 {
    CONE_TOL * (1.0 + w.frobenius()) * (1.0 + v.frobenius())
}

pub(super) fn second_subderivative(
    g: &OuterFunction,
    z: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<ExtReal> {
    let s = Spectrum::new(z)?;
    let v = smat(y)?;
    let w = smat(u)?;
    match g {
        OuterFunction::IndNegSemidef { .. } => {
            let k = s.kernel();
            let critical = negsemidef_tangent(&s, &w) && v.inner(&w).abs() <= critical_tol(&w, &v);
            if !critical {
                return Ok(ExtReal::PlusInf);
            }
            // A† with the kernel cluster treated as exactly singular.
            let apinv = s.shifted_pinv(0.0, &k).scale(-1.0);
            let wpw = SymMatrix::symmetrize(&(w.matrix() * apinv.matrix() * w.matrix()));
            Ok(ExtReal::Finite(-2.0 * v.inner(&wpw)))
        }
        _ => {
            let st = sum_structure(g, &s)?;
            if (dsum(&s, &st, &w) - v.inner(&w)).abs() > critical_tol(&w, &v) {
                return Ok(ExtReal::PlusInf);
            }
            let lam = s.eig.values[st.pos];
            let fixed = if st.smooth > 0 { s.top_projector(st.smooth) } else { SymMatrix::zeros(s.a.n()) };
            let va = v.add(&fixed.scale(-1.0));
            let pinv = s.shifted_pinv(lam, &st.cluster);
            let wpw = SymMatrix::symmetrize(&(w.matrix() * pinv.matrix() * w.matrix()));
            let mut val = 2.0 * va.inner(&wpw);
            let n = s.a.n();
            for p in 0..st.smooth {
                let qp = s.eig.vector(p);
                for q in st.smooth..n {
                    let qq = s.eig.vector(q);
                    let c = qp.dot(&(w.matrix() * &qq));
                    val += 2.0 * c * c / (s.eig.values[p] - s.eig.values[q]);
                }
            }
            Ok(ExtReal::Finite(val))
        }
    }
}

/// Orthonormal bases of range(Θ) and its complement.
fn range_split(theta: &SymMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = sym_eig(theta);
    let tol = 1e-10 * (1.0 + theta.frobenius());
    let r = e.values.iter().filter(|&&l| l > tol).count();
    let n = theta.n();
    (e.basis(0..r), e.basis(r..n))
}

fn clip(m: &SymMatrix, upper: f64) -> SymMatrix {
    let e = sym_eig(m);
    let d = DVector::from_iterator(e.values.len(), e.values.iter().map(|&l| l.min(upper)));
    SymMatrix::symmetrize(&(&e.vectors * DMatrix::from_diagonal(&d) * e.vectors.transpose()))
}

pub(super) fn critical_cone(g: &OuterFunction, z: &DVector<f64>, y: &DVector<f64>) -> Result<CriticalConeRepr> {
    let s = Spectrum::new(z)?;
    let dim = z.len();
    let v = smat(y)?;
    match g {
        OuterFunction::IndNegSemidef { .. } => {
            let k = s.kernel();
            if k.is_empty() {
                return Ok(CriticalConeRepr::Cone(PolyCone::whole(dim)));
            }
            let e = s.eig.basis(k);
            let (_, pperp) = range_split(&v.congruence(&e));
            let s_test = s.clone();
            let v_test = v.clone();
            let test: ConeTest = Arc::new(move |w: &DVector<f64>| {
                let Ok(wm) = smat(w) else { return false };
                negsemidef_tangent(&s_test, &wm) && v_test.inner(&wm).abs() <= critical_tol(&wm, &v_test)
            });
            let project: ConeProjector = Arc::new(move |w: &DVector<f64>| {
                let wm = smat(w).expect("validated length");
                let m = wm.congruence(&e);
                let inner = if pperp.ncols() == 0 {
                    DMatrix::zeros(m.n(), m.n())
                } else {
                    let nn = clip(&m.congruence(&pperp), 0.0);
                    &pperp * nn.matrix() * pperp.transpose()
                };
                let delta = &e * (inner - m.matrix()) * e.transpose();
                svec(&SymMatrix::symmetrize(&(wm.matrix() + delta)))
            });
            Ok(CriticalConeRepr::Predicate(ConePredicate::new(
                "{W : Eᵀ W E ⪯ 0, ⟨V, W⟩ = 0} with E spanning ker A",
                dim,
                test,
                Some(project),
            )))
        }
        _ => {
            let st = sum_structure(g, &s)?;
            if st.cluster.len() == st.ell {
                return Ok(CriticalConeRepr::Cone(PolyCone::whole(dim)));
            }
            let s_test = s.clone();
            let v_test = v.clone();
            let g_test = g.clone();
            let test: ConeTest = Arc::new(move |w: &DVector<f64>| {
                let Ok(wm) = smat(w) else { return false };
                let Ok(st) = sum_structure(&g_test, &s_test) else { return false };
                (dsum(&s_test, &st, &wm) - v_test.inner(&wm)).abs() <= critical_tol(&wm, &v_test)
            });
            let project = if st.smooth == 0 && st.ell == 1 {
                let e = s.eig.basis(st.cluster.clone());
                let (p, pperp) = range_split(&v.congruence(&e));
                Some(Arc::new(move |w: &DVector<f64>| max_eig_project(w, &e, &p, &pperp)) as ConeProjector)
            } else {
                None
            };
            Ok(CriticalConeRepr::Predicate(ConePredicate::new(
                "{W : d g(A)(W) = ⟨V, W⟩}",
                dim,
                test,
                project,
            )))
        }
    }
}

/// Projection onto `{W : range Θ ⊆ top eigenspace of Eᵀ W E}` by a convex
/// one-dimensional search over the shared top eigenvalue `μ`.
fn max_eig_project(w: &DVector<f64>, e: &DMatrix<f64>, p: &DMatrix<f64>, pperp: &DMatrix<f64>) -> DVector<f64> {
    let wm = smat(w).expect("validated length");
    let m = wm.congruence(e);
    let mp = m.congruence(p);
    let mq = if pperp.ncols() > 0 { Some(m.congruence(pperp)) } else { None };
    let nu: Vec<f64> = mq.as_ref().map(|q| sym_eig(q).values).unwrap_or_default();
    let s = p.ncols() as f64;
    let cost = |mu: f64| {
        let a = (mp.matrix() - DMatrix::identity(mp.n(), mp.n()) * mu).norm_squared();
        let b: f64 = nu.iter().map(|&l| (l - mu).max(0.0).powi(2)).sum();
        a + b
    };
    let diag: Vec<f64> = (0..mp.n()).map(|i| mp.matrix()[(i, i)]).chain(nu.iter().cloned()).collect();
    let mut lo = diag.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let _ = s;
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if cost(a) <= cost(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut target = p * p.transpose() * mu;
    if let Some(q) = mq {
        target += pperp * clip(&q, mu).matrix() * pperp.transpose();
    }
    let delta = e * (target - m.matrix()) * e.transpose();
    svec(&SymMatrix::symmetrize(&(wm.matrix() + delta)))
}

pub(super) fn project_negsemidef(z: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(svec(&clip(&smat(z)?, 0.0)))
}

fn positive_part_norm(m: &SymMatrix) -> f64 {
    sym_eig(m).values.iter().map(|&l| l.max(0.0).powi(2)).sum::<f64>().sqrt()
}

/// Numeric test of `U ∈ T²_{S−}(A, W)`: the smallest correction `‖U_t − U‖`
/// making `A + tW + ½t²U_t` feasible must stay within `radius_coeff·t` at the
/// three finest levels.
pub(super) fn negsemidef_second_order_tangent(
    z: &DVector<f64>,
    w: &DVector<f64>,
    u: &DVector<f64>,
    sched: &GridSchedule,
) -> Result<bool> {
    let a = smat(z)?;
    let wm = smat(w)?;
    let um = smat(u)?;
    for t in sched.finest(3) {
        let b = a.add(&wm.scale(t)).add(&um.scale(0.5 * t * t));
        let need = 2.0 * positive_part_norm(&b) / (t * t);
        if need > sched.radius(t).max(1e-9) {
            return Ok(false);
        }
    }
    Ok(true)
}
