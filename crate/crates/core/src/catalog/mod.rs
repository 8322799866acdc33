//! Outer functions `g` with closed-form first- and second-order objects:
//! values, subdifferentials, subderivatives, second subderivatives, parabolic
//! subderivatives, second-order tangent sets and critical cones.
//!
//! Spectral tags act on symmetric matrices through the isometric
//! vectorization [`svec`](crate::numkit::svec).

mod cone;
mod plq;
mod smooth;
mod spectral;

pub use cone::{describe_cone, pullback_project, ConePredicate, ConeProjector, ConeTest, CriticalConeRepr, CONE_TOL};
pub use plq::{Plq, PlqPiece};
pub(crate) use plq::{ACT_TOL, MEMBER_TOL};
pub use smooth::TwiceSemidiff;
pub use spectral::{SpectralFace, Spectrum};

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{ExtReal, GridSchedule};
use crate::numkit::{svec_dim, PolyCone, Polyhedron};
use crate::oracle::SampledFunction;
use crate::Provenance;

/// Subgradient membership tolerance.
pub const SUBGRAD_TOL: f64 = 1e-8;
/// Domain membership tolerance, relative to `1 + ‖z‖`.
pub const DOMAIN_TOL: f64 = 1e-12;

/// The catalog of outer functions.
#[derive(Debug, Clone)]
pub enum OuterFunction {
    /// Convex piecewise linear-quadratic function.
    Plq(Plq),
    /// Indicator of a polyhedron.
    IndPolyhedron(Polyhedron),
    /// Indicator of the negative semidefinite cone of the given order.
    IndNegSemidef { order: usize },
    /// Largest eigenvalue.
    MaxEig { order: usize },
    /// Sum of the `count` largest eigenvalues.
    SumTopEig { order: usize, count: usize },
    /// `λ_{index−ell+1} + … + λ_index`. The group length `ell` is fixed by the
    /// caller; closed forms apply where it equals the multiplicity position
    /// of `λ_index` at the base point.
    AlphaEig { order: usize, index: usize, ell: usize },
    /// Smooth quadratic expansion `base(z) + ½ h(z − center)`.
    TwiceSemidiff(TwiceSemidiff),
}

/// Representation of `∂g(z)`.
#[derive(Debug, Clone)]
pub enum SubdiffRepr {
    Polyhedron(Polyhedron),
    Spectral(SpectralFace),
    Point(DVector<f64>),
}

impl SubdiffRepr {
    pub fn contains(&self, y: &DVector<f64>) -> bool {
        match self {
            SubdiffRepr::Polyhedron(p) => p.contains(y, SUBGRAD_TOL * (1.0 + y.norm())),
            SubdiffRepr::Spectral(f) => f.contains(y),
            SubdiffRepr::Point(p) => {
                p.len() == y.len() && (p - y).norm() <= SUBGRAD_TOL * (1.0 + p.norm())
            }
        }
    }

    /// The single element, when the set is a singleton by construction.
    pub fn unique_element(&self) -> Option<DVector<f64>> {
        match self {
            SubdiffRepr::Point(p) => Some(p.clone()),
            SubdiffRepr::Spectral(f) => f.unique_element(),
            SubdiffRepr::Polyhedron(_) => None,
        }
    }
}

impl OuterFunction {
    /// `|·|` on the real line.
    pub fn abs() -> Self {
        OuterFunction::Plq(Plq::abs())
    }

    /// Indicator of the nonpositive orthant `R^dim_−`.
    pub fn ind_nonpos(dim: usize) -> Self {
        let p = Polyhedron::from_inequalities(
            nalgebra::DMatrix::identity(dim, dim),
            DVector::zeros(dim),
        )
        .expect("orthant");
        OuterFunction::IndPolyhedron(p)
    }

    /// Indicator of `{0} ⊂ R^dim`.
    pub fn ind_zero(dim: usize) -> Self {
        let p = Polyhedron::new(
            dim,
            nalgebra::DMatrix::zeros(0, dim),
            DVector::zeros(0),
            nalgebra::DMatrix::identity(dim, dim),
            DVector::zeros(dim),
        )
        .expect("origin");
        OuterFunction::IndPolyhedron(p)
    }

    /// Validates tag payloads.
    pub fn validate(&self) -> Result<()> {
        match self {
            OuterFunction::IndNegSemidef { order } | OuterFunction::MaxEig { order } => {
                if *order == 0 {
                    return Err(Error::InvalidInput("matrix order must be positive".into()));
                }
            }
            OuterFunction::SumTopEig { order, count } => {
                if *count == 0 || count > order {
                    return Err(Error::InvalidInput("count must lie in 1..=order".into()));
                }
            }
            OuterFunction::AlphaEig { order, index, ell } => {
                if *index == 0 || index > order || *ell == 0 || ell > index {
                    return Err(Error::InvalidInput(
                        "alpha_eig needs 1 <= ell <= index <= order".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Ambient dimension of the argument (vectorized for spectral tags).
    pub fn dim(&self) -> usize {
        match self {
            OuterFunction::Plq(p) => p.dim(),
            OuterFunction::IndPolyhedron(p) => p.dim(),
            OuterFunction::IndNegSemidef { order }
            | OuterFunction::MaxEig { order }
            | OuterFunction::SumTopEig { order, .. }
            | OuterFunction::AlphaEig { order, .. } => svec_dim(*order),
            OuterFunction::TwiceSemidiff(t) => t.dim(),
        }
    }

    pub fn tag_name(&self) -> &'static str {
        match self {
            OuterFunction::Plq(_) => "plq",
            OuterFunction::IndPolyhedron(_) => "ind_polyhedron",
            OuterFunction::IndNegSemidef { .. } => "ind_negsemidef",
            OuterFunction::MaxEig { .. } => "max_eig",
            OuterFunction::SumTopEig { .. } => "sum_top_eig",
            OuterFunction::AlphaEig { .. } => "alpha_eig",
            OuterFunction::TwiceSemidiff(_) => "twice_semidiff",
        }
    }

    /// True for tags whose domain and subdifferentials are polyhedral.
    pub fn is_polyhedral(&self) -> bool {
        matches!(self, OuterFunction::Plq(_) | OuterFunction::IndPolyhedron(_))
    }

    pub fn is_spectral(&self) -> bool {
        matches!(
            self,
            OuterFunction::IndNegSemidef { .. }
                | OuterFunction::MaxEig { .. }
                | OuterFunction::SumTopEig { .. }
                | OuterFunction::AlphaEig { .. }
        )
    }

    /// True when `dom g` is the whole space.
    pub fn has_full_domain(&self) -> bool {
        matches!(
            self,
            OuterFunction::MaxEig { .. }
                | OuterFunction::SumTopEig { .. }
                | OuterFunction::AlphaEig { .. }
                | OuterFunction::TwiceSemidiff(_)
        ) || matches!(self, OuterFunction::Plq(p) if p.has_full_domain())
    }

    fn check(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        Ok(())
    }

    fn require_domain(&self, z: &DVector<f64>) -> Result<()> {
        if self.eval(z)?.is_inf() {
            return Err(Error::PointNotInDomain);
        }
        Ok(())
    }

    /// `g(z)`.
    pub fn eval(&self, z: &DVector<f64>) -> Result<ExtReal> {
        self.check(z)?;
        let tol = DOMAIN_TOL * (1.0 + z.norm());
        Ok(match self {
            OuterFunction::Plq(p) => p.eval(z, tol),
            OuterFunction::IndPolyhedron(c) => {
                if c.contains(z, tol) { ExtReal::Finite(0.0) } else { ExtReal::PlusInf }
            }
            OuterFunction::TwiceSemidiff(t) => ExtReal::Finite(t.eval(z)?),
            _ => spectral::eval(self, z)?,
        })
    }

    /// `∂g(z)`.
    pub fn subdiff(&self, z: &DVector<f64>) -> Result<SubdiffRepr> {
        self.check(z)?;
        self.require_domain(z)?;
        match self {
            OuterFunction::Plq(p) => Ok(SubdiffRepr::Polyhedron(p.subdiff(z)?)),
            OuterFunction::IndPolyhedron(c) => {
                Ok(SubdiffRepr::Polyhedron(plq::normal_polyhedron(c, z)?))
            }
            OuterFunction::TwiceSemidiff(t) => Ok(SubdiffRepr::Point(t.gradient(z)?)),
            _ => Ok(SubdiffRepr::Spectral(spectral::subdiff(self, z)?)),
        }
    }

    /// True if `w ∈ T_{dom g}(z)`.
    pub fn domain_tangent_contains(&self, z: &DVector<f64>, w: &DVector<f64>) -> Result<bool> {
        self.check(z)?;
        self.check(w)?;
        self.require_domain(z)?;
        match self {
            OuterFunction::Plq(p) => p.tangent_contains(z, w),
            OuterFunction::IndPolyhedron(c) => {
                Ok(c.tangent_cone(z, plq::ACT_TOL)?.contains(w, plq::MEMBER_TOL))
            }
            OuterFunction::IndNegSemidef { .. } => spectral::negsemidef_tangent_contains(z, w),
            _ => Ok(true),
        }
    }

    /// `d g(z)(w)`.
    pub fn subderivative(&self, z: &DVector<f64>, w: &DVector<f64>) -> Result<ExtReal> {
        self.check(z)?;
        self.check(w)?;
        self.require_domain(z)?;
        match self {
            OuterFunction::Plq(p) => p.subderivative(z, w),
            OuterFunction::IndPolyhedron(_) => Ok(if self.domain_tangent_contains(z, w)? {
                ExtReal::Finite(0.0)
            } else {
                ExtReal::PlusInf
            }),
            OuterFunction::TwiceSemidiff(t) => Ok(ExtReal::Finite(t.gradient(z)?.dot(w))),
            _ => spectral::subderivative(self, z, w),
        }
    }

    fn require_subgradient(&self, z: &DVector<f64>, y: &DVector<f64>) -> Result<SubdiffRepr> {
        self.check(y)?;
        let sd = self.subdiff(z)?;
        if !sd.contains(y) {
            return Err(Error::NotASubgradient);
        }
        Ok(sd)
    }

    /// `d²g(z, y)(u)`.
    pub fn second_subderivative(
        &self,
        z: &DVector<f64>,
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<ExtReal> {
        self.check(u)?;
        self.require_subgradient(z, y)?;
        match self {
            OuterFunction::Plq(p) => p.second_subderivative(z, y, u),
            OuterFunction::IndPolyhedron(c) => {
                let t = c.tangent_cone(z, plq::ACT_TOL)?;
                let crit = t.contains(u, plq::MEMBER_TOL)
                    && y.dot(u).abs() <= CONE_TOL * (1.0 + u.norm()) * (1.0 + y.norm());
                Ok(if crit { ExtReal::Finite(0.0) } else { ExtReal::PlusInf })
            }
            OuterFunction::TwiceSemidiff(t) => Ok(ExtReal::Finite(t.second_form(z, u)?)),
            _ => spectral::second_subderivative(self, z, y, u),
        }
    }

    /// `d²g(z)(w | u)` with its provenance.
    pub fn parabolic_subderivative(
        &self,
        z: &DVector<f64>,
        w: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(ExtReal, Provenance)> {
        self.check(u)?;
        let dw = self.subderivative(z, w)?;
        if dw.is_inf() {
            return Err(Error::SubderivativeNotFinite);
        }
        match self {
            OuterFunction::Plq(p) => Ok((p.parabolic_subderivative(z, w, u, dw)?, Provenance::ClosedForm)),
            OuterFunction::IndPolyhedron(c) => {
                let inside = plq::second_order_tangent(c, z, w, u)?;
                Ok((if inside { ExtReal::Finite(0.0) } else { ExtReal::PlusInf }, Provenance::ClosedForm))
            }
            OuterFunction::TwiceSemidiff(t) => {
                Ok((ExtReal::Finite(t.second_form(z, w)? + t.gradient(z)?.dot(u)), Provenance::ClosedForm))
            }
            OuterFunction::IndNegSemidef { .. } => {
                let (inside, prov) = self.second_order_tangent(z, w, u)?;
                Ok((if inside { ExtReal::Finite(0.0) } else { ExtReal::PlusInf }, prov))
            }
            _ => {
                let f = self.as_sampled();
                let est = crate::oracle::estimate_parabolic_subderivative(
                    &f,
                    z,
                    w,
                    dw.finite().expect("finite"),
                    u,
                    &GridSchedule::default(),
                )?;
                Ok((est, Provenance::Numeric))
            }
        }
    }

    /// Membership `u ∈ T²_{dom g}(z, w)` with its provenance.
    pub fn second_order_tangent(
        &self,
        z: &DVector<f64>,
        w: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(bool, Provenance)> {
        self.check(u)?;
        if !self.domain_tangent_contains(z, w)? {
            return Err(Error::TangentPreconditionFailed);
        }
        match self {
            OuterFunction::Plq(p) => Ok((p.second_order_tangent(z, w, u)?, Provenance::ClosedForm)),
            OuterFunction::IndPolyhedron(c) => {
                Ok((plq::second_order_tangent(c, z, w, u)?, Provenance::ClosedForm))
            }
            OuterFunction::IndNegSemidef { .. } => Ok((
                spectral::negsemidef_second_order_tangent(z, w, u, &GridSchedule::default())?,
                Provenance::Numeric,
            )),
            _ => Ok((true, Provenance::ClosedForm)),
        }
    }

    /// `K_g(z, y)`.
    pub fn critical_cone(&self, z: &DVector<f64>, y: &DVector<f64>) -> Result<CriticalConeRepr> {
        let sd = self.require_subgradient(z, y)?;
        match self {
            OuterFunction::Plq(_) => {
                let SubdiffRepr::Polyhedron(p) = sd else { unreachable!() };
                Ok(CriticalConeRepr::Cone(p.tangent_cone(y, plq::SUBDIFF_ACT_TOL)?.polar()?))
            }
            OuterFunction::IndPolyhedron(c) => {
                let t = c.tangent_cone(z, plq::ACT_TOL)?;
                Ok(CriticalConeRepr::Cone(t.with_equality(y)?))
            }
            OuterFunction::TwiceSemidiff(t) => Ok(CriticalConeRepr::Cone(PolyCone::whole(t.dim()))),
            _ => spectral::critical_cone(self, z, y),
        }
    }

    /// Euclidean projection onto `dom g`.
    pub fn project_domain(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(z)?;
        match self {
            OuterFunction::Plq(p) => p.project_domain(z),
            OuterFunction::IndPolyhedron(c) => c.project(z),
            OuterFunction::IndNegSemidef { .. } => spectral::project_negsemidef(z),
            _ => Ok(z.clone()),
        }
    }

    /// `d(z, dom g)`.
    pub fn domain_distance(&self, z: &DVector<f64>) -> Result<f64> {
        Ok((self.project_domain(z)? - z).norm())
    }

    /// Generators of `N_{dom g}(z)` as a cone, for polyhedral domains.
    pub fn domain_normal_cone(&self, z: &DVector<f64>) -> Result<PolyCone> {
        self.check(z)?;
        self.require_domain(z)?;
        match self {
            OuterFunction::Plq(p) => p.domain_normal_cone(z),
            OuterFunction::IndPolyhedron(c) => c.tangent_cone(z, plq::ACT_TOL)?.polar(),
            OuterFunction::TwiceSemidiff(_) | OuterFunction::MaxEig { .. }
            | OuterFunction::SumTopEig { .. } | OuterFunction::AlphaEig { .. } => {
                Ok(PolyCone::zero(self.dim()))
            }
            OuterFunction::IndNegSemidef { .. } => {
                Err(Error::UnsupportedTag("normal cone of the semidefinite cone is not polyhedral".into()))
            }
        }
    }

    /// The function as an oracle input.
    pub fn as_sampled(&self) -> SampledFunction {
        let g = self.clone();
        let dim = self.dim();
        SampledFunction::new(
            dim,
            format!("outer function {}", self.tag_name()),
            Arc::new(move |z: &DVector<f64>| g.eval(z).unwrap_or(ExtReal::PlusInf)),
        )
    }
}

/// See [`OuterFunction::eval`].
pub fn g_eval(g: &OuterFunction, z: &DVector<f64>) -> Result<ExtReal> {
    g.eval(z)
}

/// See [`OuterFunction::subdiff`].
pub fn g_subdiff(g: &OuterFunction, z: &DVector<f64>) -> Result<SubdiffRepr> {
    g.subdiff(z)
}

/// See [`OuterFunction::subderivative`].
pub fn g_subderivative(g: &OuterFunction, z: &DVector<f64>, w: &DVector<f64>) -> Result<ExtReal> {
    g.subderivative(z, w)
}

/// See [`OuterFunction::second_subderivative`].
pub fn g_second_subderivative(
    g: &OuterFunction,
    z: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<ExtReal> {
    g.second_subderivative(z, y, u)
}

/// See [`OuterFunction::parabolic_subderivative`].
pub fn g_parabolic_subderivative(
    g: &OuterFunction,
    z: &DVector<f64>,
    w: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(ExtReal, Provenance)> {
    g.parabolic_subderivative(z, w, u)
}

/// See [`OuterFunction::second_order_tangent`].
pub fn g_second_order_tangent(
    g: &OuterFunction,
    z: &DVector<f64>,
    w: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(bool, Provenance)> {
    g.second_order_tangent(z, w, u)
}

/// See [`OuterFunction::critical_cone`].
pub fn g_critical_cone(g: &OuterFunction, z: &DVector<f64>, y: &DVector<f64>) -> Result<CriticalConeRepr> {
    g.critical_cone(z, y)
}

#[cfg(test)]
mod tests;
