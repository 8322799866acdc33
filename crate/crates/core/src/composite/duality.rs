use nalgebra::{DMatrix, DVector};

use super::ChainContext;
use crate::catalog::{OuterFunction, ACT_TOL, MEMBER_TOL};
use crate::error::{Error, Result};
use crate::model::ExtReal;
use crate::numkit::{rank, PolyCone, Polyhedron};
use crate::oracle::gap_between;
use crate::Provenance;

/// Half-width of the box for the primal LP; twice this is used to detect unboundedness.
const PRIMAL_BOX: f64 = 1e4;

/// The primal/dual pair for `d²f(x, v)(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityInfo {
    /// `min_z { d²f(x)(w | z) − ⟨z, v⟩ }`.
    pub primal: ExtReal,
    /// `max_{y ∈ Λ ∩ τB} { ⟨y, ∇²F(x)(w, w)⟩ + d²g(F(x), y)(∇F(x) w) }`.
    pub dual: ExtReal,
    pub argmax_y: DVector<f64>,
    pub primal_argmin: Option<DVector<f64>>,
    pub primal_provenance: Provenance,
    pub tau: f64,
    pub gap: f64,
    /// Whether `w` passed the critical-cone test.
    pub critical: bool,
}

/// Minimal value of the primal problem with its minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalValue {
    pub value: ExtReal,
    pub argmin: Option<DVector<f64>>,
    pub provenance: Provenance,
}

/// `d²f(x, v)(w)` by the multiplier formula, with the primal value alongside.
/// Outside the critical cone both values are `+∞`.
pub fn second_subderivative_chain(ctx: &ChainContext<'_>, w: &DVector<f64>) -> Result<DualityInfo> {
    if w.len() != ctx.prob.n() {
        return Err(Error::DimensionMismatch { expected: ctx.prob.n(), got: w.len() });
    }
    let cone = ctx.critical_cone()?;
    let y0 = ctx.multipliers.first()?.clone();
    if !cone.contains(w) {
        return Ok(DualityInfo {
            primal: ExtReal::PlusInf,
            dual: ExtReal::PlusInf,
            argmax_y: y0,
            primal_argmin: None,
            primal_provenance: Provenance::ClosedForm,
            tau: ctx.tau,
            gap: 0.0,
            critical: false,
        });
    }
    let (dual, argmax_y) = dual_value(ctx, w)?;
    let primal = primal_value(ctx, w)?;
    Ok(DualityInfo {
        gap: gap_between(&primal.value, &dual),
        primal: primal.value,
        dual,
        argmax_y,
        primal_argmin: primal.argmin,
        primal_provenance: primal.provenance,
        tau: ctx.tau,
        critical: true,
    })
}

/// The multiplier maximization alone, with its maximizer. The caller is
/// responsible for `w` being critical.
pub fn dual_value(ctx: &ChainContext<'_>, w: &DVector<f64>) -> Result<(ExtReal, DVector<f64>)> {
    let u = &ctx.jac * w;
    let s = ctx.prob.map.second_form(&ctx.x, w)?;
    let mult = &ctx.multipliers;
    match (&mult.repr, &ctx.prob.outer) {
        (super::MultiplierRepr::Polyhedron(lam), OuterFunction::IndPolyhedron(_)) => {
            let (val, y) = lam.lp_max(&s)?;
            Ok((val, y))
        }
        (super::MultiplierRepr::Polyhedron(lam), OuterFunction::Plq(p)) => {
            let mut best: Option<(ExtReal, DVector<f64>)> = None;
            for i in p.active(&ctx.z) {
                if !p.tangent(i, &ctx.z)?.contains(&u, MEMBER_TOL) {
                    continue;
                }
                let piece = &p.pieces()[i];
                let grad = piece.gradient(&ctx.z);
                let lam_i = lam.with_equality(&u, u.dot(&grad))?;
                let (val, y) = match lam_i.lp_max(&s) {
                    Ok(r) => r,
                    Err(Error::EmptyPolyhedron) => continue,
                    Err(e) => return Err(e),
                };
                let total = val + piece.quad.quad(&u);
                if best.as_ref().map_or(true, |b| total > b.0) {
                    best = Some((total, y));
                }
            }
            best.ok_or(Error::EmptyMultiplierSet)
        }
        _ => {
            let mut best: Option<(ExtReal, DVector<f64>)> = None;
            for y in &mult.elements {
                let val = ctx.prob.outer.second_subderivative(&ctx.z, y, &u)? + y.dot(&s);
                if best.as_ref().map_or(true, |b| val > b.0) {
                    best = Some((val, y.clone()));
                }
            }
            best.ok_or(Error::EmptyMultiplierSet)
        }
    }
}

/// `max ⟨c, z⟩` over `{z : ∇F(x) z + s ∈ q, ‖z‖_∞ ≤ R}`.
fn lp_over_preimage(q: &PolyCone, j: &DMatrix<f64>, s: &DVector<f64>, c: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = j.ncols();
    let g = q.ineq_matrix() * j;
    let h = -(q.ineq_matrix() * s);
    let e = q.eq_matrix() * j;
    let d = -(q.eq_matrix() * s);
    let p = Polyhedron::new(n, g, h, e, d)?;
    let (v1, z1) = p.intersect(&Polyhedron::cube(n, PRIMAL_BOX))?.lp_max(c)?;
    let (v2, _) = p.intersect(&Polyhedron::cube(n, 2.0 * PRIMAL_BOX))?.lp_max(c)?;
    let (v1, v2) = (v1.to_f64(), v2.to_f64());
    if v2 - v1 > 1e-6 * (1.0 + v1.abs()) {
        return Err(Error::NegativeInfinityDetected);
    }
    Ok((v1, z1))
}

/// `min_z { d²g(F(x))(∇F(x) w | ∇F(x) z + ∇²F(x)(w, w)) − ⟨z, v⟩ }`.
///
/// Polyhedral and piecewise linear-quadratic `g` give an exact LP over the
/// preimage of the second-order tangent cone. The semidefinite indicator with
/// a surjective Jacobian uses the support function of its second-order
/// tangent set. Other spectral tags fall back to a small numeric search.
pub fn primal_value(ctx: &ChainContext<'_>, w: &DVector<f64>) -> Result<PrimalValue> {
    if !ctx.critical_cone()?.contains(w) {
        return Err(Error::CriticalConePreconditionFailed);
    }
    let j = &ctx.jac;
    let u = j * w;
    let s = ctx.prob.map.second_form(&ctx.x, w)?;
    let v = &ctx.v;
    let z = &ctx.z;
    match &ctx.prob.outer {
        OuterFunction::IndPolyhedron(c) => {
            let t = c.tangent_cone(z, ACT_TOL)?;
            let q = t.tangent_cone(&u, ACT_TOL * (1.0 + u.norm()))?;
            let (m, arg) = lp_over_preimage(&q, j, &s, v)?;
            Ok(PrimalValue { value: ExtReal::from_f64(-m)?, argmin: Some(arg), provenance: Provenance::ClosedForm })
        }
        OuterFunction::Plq(p) => {
            let dw = ctx.prob.outer.subderivative(z, &u)?.finite().ok_or(Error::SubderivativeNotFinite)?;
            let mut best: Option<(f64, DVector<f64>)> = None;
            for (i, t2) in p.parabolic_pieces(z, &u, dw)? {
                let piece = &p.pieces()[i];
                let grad = piece.gradient(z);
                let c = v - j.transpose() * &grad;
                let (m, arg) = match lp_over_preimage(&t2, j, &s, &c) {
                    Ok(r) => r,
                    Err(Error::EmptyPolyhedron) => continue,
                    Err(e) => return Err(e),
                };
                let val = piece.quad.quad(&u) + grad.dot(&s) - m;
                if best.as_ref().map_or(true, |b| val < b.0) {
                    best = Some((val, arg));
                }
            }
            Ok(match best {
                Some((val, arg)) => PrimalValue {
                    value: ExtReal::from_f64(val)?,
                    argmin: Some(arg),
                    provenance: Provenance::ClosedForm,
                },
                None => PrimalValue { value: ExtReal::PlusInf, argmin: None, provenance: Provenance::ClosedForm },
            })
        }
        OuterFunction::TwiceSemidiff(t) => {
            let grad = t.gradient(z)?;
            if (j.transpose() * &grad - v).norm() > super::AFFINE_TOL * (1.0 + v.norm()) {
                return Err(Error::NegativeInfinityDetected);
            }
            let val = t.second_form(z, &u)? + grad.dot(&s);
            Ok(PrimalValue {
                value: ExtReal::from_f64(val)?,
                argmin: Some(DVector::zeros(w.len())),
                provenance: Provenance::ClosedForm,
            })
        }
        OuterFunction::IndNegSemidef { .. } if rank(j) == j.nrows() => {
            // With ∇F(x) onto, the primal is ⟨y, s⟩ − σ_{T²}(y) for any multiplier y.
            let y = ctx.multipliers.first()?;
            let d2 = ctx.prob.outer.second_subderivative(z, y, &u)?;
            Ok(PrimalValue { value: d2 + y.dot(&s), argmin: None, provenance: Provenance::ClosedForm })
        }
        _ => numeric_primal(ctx, w),
    }
}

/// Minimum of the primal objective over `z ∈ {0, ±e_i}`.
fn numeric_primal(ctx: &ChainContext<'_>, w: &DVector<f64>) -> Result<PrimalValue> {
    let n = w.len();
    let mut cands = vec![DVector::zeros(n)];
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[i] = s;
            cands.push(e);
        }
    }
    let mut best: Option<(ExtReal, DVector<f64>)> = None;
    for zc in cands {
        let (val, _) = super::parabolic_chain(ctx.prob, &ctx.x, w, &zc)?;
        let obj = match val {
            ExtReal::Finite(a) => ExtReal::from_f64(a - zc.dot(&ctx.v))?,
            ExtReal::PlusInf => ExtReal::PlusInf,
        };
        if best.as_ref().map_or(true, |b| obj < b.0) {
            best = Some((obj, zc));
        }
    }
    let (value, arg) = best.expect("candidates nonempty");
    Ok(PrimalValue { value, argmin: value.is_finite().then_some(arg), provenance: Provenance::Numeric })
}
