//! Extended reals, polynomial maps with exact derivatives, the step schedule
//! used by the difference-quotient oracle, and the composite-problem container.

mod extreal;
mod poly;

pub use extreal::{ExtReal, CAP, NEG_GUARD};
pub use poly::{Monomial, PolyMap, Polynomial, MAX_DEGREE};

use nalgebra::DVector;

use crate::catalog::OuterFunction;
use crate::error::{Error, Result};

/// Geometric step sequence `t_k = t0·ratio^k` and the search-ball rule
/// `‖w′ − w‖ ≤ radius_coeff · t^radius_exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSchedule {
    pub t0: f64,
    pub ratio: f64,
    pub steps: usize,
    pub radius_coeff: f64,
    pub samples_per_axis: usize,
    /// 1.0 gives the bounded-ratio ball; smaller values widen the ball for
    /// functions whose recovery sequences approach more slowly than `t`.
    pub radius_exponent: f64,
}

impl Default for GridSchedule {
    fn default() -> Self {
        GridSchedule {
            t0: 0.1,
            ratio: 0.5,
            steps: 10,
            radius_coeff: 4.0,
            samples_per_axis: 9,
            radius_exponent: 1.0,
        }
    }
}

impl GridSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidInput("schedule t0 must be positive".into()));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidInput("schedule ratio must lie in (0, 1)".into()));
        }
        if self.steps < 3 {
            return Err(Error::InvalidInput("schedule needs at least 3 steps".into()));
        }
        if !(self.radius_coeff >= 0.0 && self.radius_coeff.is_finite()) {
            return Err(Error::InvalidInput("schedule radius_coeff must be nonnegative".into()));
        }
        if self.samples_per_axis < 1 {
            return Err(Error::InvalidInput("samples_per_axis must be positive".into()));
        }
        if !(self.radius_exponent > 0.0 && self.radius_exponent <= 1.0) {
            return Err(Error::InvalidInput("radius_exponent must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// `t_0 > t_1 > … > t_{steps−1}`.
    pub fn levels(&self) -> Vec<f64> {
        (0..self.steps).map(|k| self.t0 * self.ratio.powi(k as i32)).collect()
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.radius_coeff * t.powf(self.radius_exponent)
    }

    /// Same ball rule restricted to the three finest levels.
    pub fn finest(&self, count: usize) -> Vec<f64> {
        let l = self.levels();
        l[l.len().saturating_sub(count)..].to_vec()
    }
}

/// `ψ(x) = φ(x) + g(F(x))`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub phi: Polynomial,
    pub map: PolyMap,
    pub outer: OuterFunction,
}

impl CompositeProblem {
    pub fn new(phi: Polynomial, map: PolyMap, outer: OuterFunction) -> Result<Self> {
        if phi.n_vars() != map.n_in() {
            return Err(Error::DimensionMismatch { expected: map.n_in(), got: phi.n_vars() });
        }
        if map.n_out() != outer.dim() {
            return Err(Error::DimensionMismatch { expected: outer.dim(), got: map.n_out() });
        }
        Ok(CompositeProblem { phi, map, outer })
    }

    /// Number of decision variables.
    pub fn n(&self) -> usize {
        self.map.n_in()
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: x.len() });
        }
        Ok(())
    }

    /// `f(x) = g(F(x))`.
    pub fn f_value(&self, x: &DVector<f64>) -> Result<ExtReal> {
        self.check(x)?;
        self.outer.eval(&self.map.eval(x)?)
    }

    /// `ψ(x) = φ(x) + g(F(x))`.
    pub fn value(&self, x: &DVector<f64>) -> Result<ExtReal> {
        Ok(self.f_value(x)? + self.phi.eval(x)?)
    }

    /// Errors with `BasePointInfeasible` unless `F(x) ∈ dom g`.
    pub fn require_feasible(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        let z = self.map.eval(x)?;
        if self.outer.eval(&z)?.is_inf() {
            return Err(Error::BasePointInfeasible);
        }
        Ok(z)
    }

    /// Default subgradient `v = −∇φ(x)`.
    pub fn default_v(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-self.phi.gradient(x)?)
    }
}
