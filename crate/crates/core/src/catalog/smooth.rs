use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::Polynomial;

/// `g(z) = base(z) + ½ h(z − center)` with `h` a homogeneous quadratic, so that
/// `g` expands to second order around `center` with curvature term `h`.
#[derive(Debug, Clone)]
pub struct TwiceSemidiff {
    base: Polynomial,
    curvature: Polynomial,
    center: DVector<f64>,
}

impl TwiceSemidiff {
    pub fn new(base: Polynomial, curvature: Polynomial, center: DVector<f64>) -> Result<Self> {
        let m = base.n_vars();
        if curvature.n_vars() != m {
            return Err(Error::DimensionMismatch { expected: m, got: curvature.n_vars() });
        }
        if center.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: center.len() });
        }
        if !curvature.is_homogeneous(2) {
            return Err(Error::InvalidInput(
                "curvature term must be homogeneous of degree 2".into(),
            ));
        }
        Ok(TwiceSemidiff { base, curvature, center })
    }

    pub fn dim(&self) -> usize {
        self.base.n_vars()
    }

    pub fn base(&self) -> &Polynomial {
        &self.base
    }

    pub fn curvature(&self) -> &Polynomial {
        &self.curvature
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn eval(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.base.eval(z)? + 0.5 * self.curvature.eval(&(z - &self.center))?)
    }

    pub fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.base.gradient(z)? + 0.5 * self.curvature.gradient(&(z - &self.center))?)
    }

    /// `⟨∇²g(z) u, u⟩ = ⟨∇²base(z) u, u⟩ + h(u)`.
    pub fn second_form(&self, z: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        Ok(self.base.hessian(z)?.quad(u) + self.curvature.eval(u)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_quadratic_curvature() {
        let b = Polynomial::zero(1);
        assert!(TwiceSemidiff::new(b.clone(), Polynomial::parse("x1^2 + x1", 1).unwrap(), DVector::zeros(1)).is_err());
        let t = TwiceSemidiff::new(b, Polynomial::parse("x1^2", 1).unwrap(), DVector::zeros(1)).unwrap();
        let u = DVector::from_element(1, 0.7);
        let h = t.curvature().eval(&u).unwrap();
        assert!((t.curvature().eval(&(&u * 2.0)).unwrap() - 4.0 * h).abs() < 1e-12);
        assert_eq!(t.second_form(&DVector::zeros(1), &DVector::from_element(1, 1.0)).unwrap(), 1.0);
    }
}
