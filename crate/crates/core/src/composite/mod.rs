//! Composite calculus for `f = g∘F`: Lagrange multipliers, the τ bound,
//! constraint qualifications, critical cones and the chain rules for first,
//! parabolic and second subderivatives.

mod cq;
mod duality;

pub use cq::{check_basic_cq, check_mscq, restore_feasible, MscqResult};
pub use duality::{dual_value, primal_value, second_subderivative_chain, DualityInfo, PrimalValue};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{CriticalConeRepr, OuterFunction, SpectralFace, SubdiffRepr};
use crate::error::{Error, Result};
use crate::model::{CompositeProblem, ExtReal, GridSchedule};
use crate::numkit::{op_norm, rank, smat, solve_least_squares, sym_eig, Polyhedron};
use crate::oracle::SampledFunction;
use crate::Provenance;

/// Tolerance on the affine condition `∇F(x)ᵀ y = v`.
pub const AFFINE_TOL: f64 = 1e-8;
/// Box used when the τ-box leaves no multiplier.
const WIDE_BOX: f64 = 1e6;

/// How `Λ(x, v)` is stored.
#[derive(Debug, Clone)]
pub enum MultiplierRepr {
    Polyhedron(Polyhedron),
    Spectral(SpectralFace),
    FiniteList,
}

/// `Λ(x, v) = {y : ∇F(x)ᵀ y = v, y ∈ ∂g(F(x))}`, possibly cut to the box `‖y‖_∞ ≤ τ`.
#[derive(Debug, Clone)]
pub struct MultiplierSet {
    pub repr: MultiplierRepr,
    pub tau: f64,
    /// True when the stored set is the τ-box truncation.
    pub truncated: bool,
    /// Vertices of the (truncated) polyhedron, or the listed elements.
    pub elements: Vec<DVector<f64>>,
}

impl MultiplierSet {
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn first(&self) -> Result<&DVector<f64>> {
        self.elements.first().ok_or(Error::EmptyMultiplierSet)
    }
}

/// The constant `ℓ` of Lipschitz continuity of `g` near `F(x)` relative to its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzInfo {
    pub ell: f64,
}

/// Where the MSCQ modulus came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MscqProvenance {
    VerifiedEmpirically,
    /// Sampled, but the ratios did not stay bounded.
    FailedEmpirically,
    UserAsserted,
}

impl MscqProvenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            MscqProvenance::VerifiedEmpirically => "verified-empirically",
            MscqProvenance::FailedEmpirically => "failed-empirically",
            MscqProvenance::UserAsserted => "user-asserted",
        }
    }
}

/// Inputs that fix `κ`, `ℓ` and the sampling behaviour of the chain rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub kappa: Option<f64>,
    pub ell: Option<f64>,
    pub mscq_samples: usize,
    pub mscq_radius: f64,
    pub seed: u64,
    pub schedule: GridSchedule,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings {
            kappa: None,
            ell: None,
            mscq_samples: 200,
            mscq_radius: 0.1,
            seed: 7,
            schedule: GridSchedule::default(),
        }
    }
}

/// Rounds an empirical modulus up to a power of two, allowing `1e-3`
/// relative slack so that values like `1.0004` stay at `1`.
pub fn round_kappa(raw: f64) -> f64 {
    if raw <= 0.0 {
        return 0.0;
    }
    let e = (raw / (1.0 + 1e-3)).log2().ceil();
    2f64.powi(e as i32)
}

/// Everything the chain rule needs at `(x, v)`, computed once.
#[derive(Debug, Clone)]
pub struct ChainContext<'a> {
    pub prob: &'a CompositeProblem,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub z: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub kappa: f64,
    pub ell: f64,
    pub tau: f64,
    pub mscq: Option<MscqResult>,
    pub mscq_provenance: MscqProvenance,
    pub multipliers: MultiplierSet,
    pub schedule: GridSchedule,
}

impl<'a> ChainContext<'a> {
    pub fn new(prob: &'a CompositeProblem, x: &DVector<f64>, v: &DVector<f64>, s: &ChainSettings) -> Result<Self> {
        let z = prob.require_feasible(x)?;
        if v.len() != prob.n() {
            return Err(Error::DimensionMismatch { expected: prob.n(), got: v.len() });
        }
        let jac = prob.map.jacobian(x)?;
        let (kappa, mscq, mscq_provenance) = match s.kappa {
            Some(k) => {
                if !(k >= 0.0) {
                    return Err(Error::InvalidInput("kappa must be nonnegative".into()));
                }
                (k, None, MscqProvenance::UserAsserted)
            }
            None => {
                let r = check_mscq(prob, x, s.mscq_samples, s.mscq_radius, s.seed)?;
                let prov = if r.holds_evidence {
                    MscqProvenance::VerifiedEmpirically
                } else {
                    MscqProvenance::FailedEmpirically
                };
                (round_kappa(r.kappa_hat), Some(r), prov)
            }
        };
        let ell = match s.ell {
            Some(l) if l >= 0.0 => l,
            Some(_) => return Err(Error::InvalidInput("ell must be nonnegative".into())),
            None => lipschitz_constant(&prob.outer, &z)?.ell,
        };
        let tau = tau_bound(prob, x, v, kappa, ell)?;
        let multipliers = multipliers(prob, x, v, tau)?;
        Ok(ChainContext {
            prob,
            x: x.clone(),
            v: v.clone(),
            z,
            jac,
            kappa,
            ell,
            tau,
            mscq,
            mscq_provenance,
            multipliers,
            schedule: s.schedule,
        })
    }

    pub fn critical_cone(&self) -> Result<CriticalConeRepr> {
        let y0 = self.multipliers.first()?;
        self.prob.outer.critical_cone(&self.z, y0)?.pullback(&self.jac)
    }

    pub fn second_subderivative(&self, w: &DVector<f64>) -> Result<DualityInfo> {
        second_subderivative_chain(self, w)
    }
}

fn affine_ok(j: &DMatrix<f64>, y: &DVector<f64>, v: &DVector<f64>) -> bool {
    (j.transpose() * y - v).norm() <= AFFINE_TOL * (1.0 + v.norm())
}

/// `Λ(x, v)` truncated to `‖y‖_∞ ≤ τ` for polyhedral `∂g`.
pub fn multipliers(prob: &CompositeProblem, x: &DVector<f64>, v: &DVector<f64>, tau: f64) -> Result<MultiplierSet> {
    let z = prob.require_feasible(x)?;
    let j = prob.map.jacobian(x)?;
    if v.len() != prob.n() {
        return Err(Error::DimensionMismatch { expected: prob.n(), got: v.len() });
    }
    match prob.outer.subdiff(&z)? {
        SubdiffRepr::Polyhedron(p) => {
            let m = p.dim();
            let lam = Polyhedron::new(m, DMatrix::zeros(0, m), DVector::zeros(0), j.transpose(), v.clone())?
                .intersect(&p)?;
            let boxed = lam.intersect(&Polyhedron::cube(m, tau))?;
            let elements = boxed.vertices()?;
            if !elements.is_empty() {
                return Ok(MultiplierSet { repr: MultiplierRepr::Polyhedron(boxed), tau, truncated: true, elements });
            }
            let wide = lam.intersect(&Polyhedron::cube(m, WIDE_BOX))?;
            let elements = wide.vertices()?;
            Ok(MultiplierSet { repr: MultiplierRepr::Polyhedron(wide), tau, truncated: false, elements })
        }
        SubdiffRepr::Point(y) => {
            let elements = if affine_ok(&j, &y, v) { vec![y] } else { Vec::new() };
            Ok(MultiplierSet { repr: MultiplierRepr::FiniteList, tau, truncated: false, elements })
        }
        SubdiffRepr::Spectral(face) => {
            let elements = spectral_multipliers(&face, &j, v)?;
            Ok(MultiplierSet { repr: MultiplierRepr::Spectral(face), tau, truncated: false, elements })
        }
    }
}

/// Solves `∇F(x)ᵀ y(θ) = v` in the face coordinates `y(θ) = fixed + E smat(θ) Eᵀ`.
fn spectral_multipliers(face: &SpectralFace, j: &DMatrix<f64>, v: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    if let Some(y) = face.unique_element() {
        return Ok(if affine_ok(j, &y, v) { vec![y] } else { Vec::new() });
    }
    let pd = face.param_dim();
    let y0 = face.element(&DVector::zeros(pd))?;
    let m = y0.len();
    let mut b = DMatrix::zeros(m, pd);
    let mut trace_row = DVector::zeros(pd);
    for k in 0..pd {
        let mut e = DVector::zeros(pd);
        e[k] = 1.0;
        b.set_column(k, &(face.element(&e)? - &y0));
        trace_row[k] = smat(&e)?.matrix().trace();
    }
    let mut a = j.transpose() * &b;
    let mut rhs = v - j.transpose() * &y0;
    if let Some(c) = face.trace {
        let rows = a.nrows();
        a = a.insert_row(rows, 0.0);
        let last = a.nrows() - 1;
        a.set_row(last, &trace_row.transpose());
        rhs = rhs.push(c);
    }
    let (theta, res) = solve_least_squares(&a, &rhs)?;
    if res > AFFINE_TOL * (1.0 + rhs.norm()) {
        return Ok(Vec::new());
    }
    if rank(&a) < pd {
        return Err(Error::UnsupportedSpectralMultiplicity);
    }
    let y = face.element(&theta)?;
    Ok(if face.contains(&y) { vec![y] } else { Vec::new() })
}

/// Closed-form `ℓ` per catalog tag.
pub fn lipschitz_constant(g: &OuterFunction, z: &DVector<f64>) -> Result<LipschitzInfo> {
    let ell = match g {
        OuterFunction::IndPolyhedron(_) | OuterFunction::IndNegSemidef { .. } => 0.0,
        OuterFunction::Plq(p) => p
            .pieces()
            .iter()
            .map(|pc| {
                let a = sym_eig(&pc.quad).values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
                pc.gradient(z).norm() + a
            })
            .fold(0.0, f64::max),
        OuterFunction::MaxEig { .. } => 1.0,
        OuterFunction::SumTopEig { count, .. } => *count as f64,
        OuterFunction::AlphaEig { ell, .. } => *ell as f64,
        OuterFunction::TwiceSemidiff(t) => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x11b);
            let d = t.dim();
            let mut best = t.gradient(z)?.norm();
            for _ in 0..200 {
                let mut u = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
                let n = u.norm();
                if n > 1.0 {
                    u /= n;
                }
                best = best.max(t.gradient(&(z + u))?.norm());
            }
            best
        }
    };
    Ok(LipschitzInfo { ell })
}

/// `τ = κℓ‖∇F(x)‖ + κ‖v‖ + ℓ` with the spectral norm of the Jacobian.
pub fn tau_bound(prob: &CompositeProblem, x: &DVector<f64>, v: &DVector<f64>, kappa: f64, ell: f64) -> Result<f64> {
    if !(kappa >= 0.0 && ell >= 0.0) {
        return Err(Error::InvalidInput("kappa and ell must be nonnegative".into()));
    }
    let j = prob.map.jacobian(x)?;
    Ok(kappa * ell * op_norm(&j) + kappa * v.norm() + ell)
}

/// `d f(x)(w) = d g(F(x))(∇F(x) w)`.
pub fn subderivative_chain(prob: &CompositeProblem, x: &DVector<f64>, w: &DVector<f64>) -> Result<ExtReal> {
    let z = prob.require_feasible(x)?;
    let u = prob.map.jacobian(x)? * w;
    prob.outer.subderivative(&z, &u)
}

/// `K_f(x, v) = {w : ∇F(x) w ∈ K_g(F(x), y₀)}` for the first stored multiplier `y₀`.
pub fn critical_cone(prob: &CompositeProblem, x: &DVector<f64>, mult: &MultiplierSet) -> Result<CriticalConeRepr> {
    let z = prob.require_feasible(x)?;
    let y0 = mult.first()?;
    prob.outer.critical_cone(&z, y0)?.pullback(&prob.map.jacobian(x)?)
}

/// `d²f(x)(w | ζ) = d²g(F(x))(∇F(x)w | ∇F(x)ζ + ∇²F(x)(w, w))`.
pub fn parabolic_chain(
    prob: &CompositeProblem,
    x: &DVector<f64>,
    w: &DVector<f64>,
    zeta: &DVector<f64>,
) -> Result<(ExtReal, Provenance)> {
    if subderivative_chain(prob, x, w)?.is_inf() {
        return Err(Error::SubderivativeNotFinite);
    }
    let z = prob.require_feasible(x)?;
    let j = prob.map.jacobian(x)?;
    let inner = &j * zeta + prob.map.second_form(x, w)?;
    prob.outer.parabolic_subderivative(&z, &(&j * w), &inner)
}

/// `x ↦ g(F(x))`, optionally plus `φ(x)`, as an oracle input. When `dom g`
/// is not the whole space the function carries the Gauss–Newton restoration
/// of [`restore_feasible`] as its domain projector.
pub fn assembled_function(prob: &CompositeProblem, include_phi: bool) -> SampledFunction {
    let p = prob.clone();
    let desc = if include_phi { "phi + g o F" } else { "g o F" };
    let f = SampledFunction::new(
        prob.n(),
        desc,
        Arc::new(move |x: &DVector<f64>| {
            let g = p.f_value(x).unwrap_or(ExtReal::PlusInf);
            if include_phi {
                g + p.phi.eval(x).unwrap_or(f64::NAN)
            } else {
                g
            }
        }),
    );
    if prob.outer.has_full_domain() {
        return f;
    }
    let p = prob.clone();
    f.with_projector(Arc::new(move |x: &DVector<f64>| restore_feasible(&p, x).unwrap_or_else(|| x.clone())))
}
