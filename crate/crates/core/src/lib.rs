//! Second-order variational calculus for composite problems
//! `min φ(x) + g(F(x))` with a smooth polynomial part `φ`, a polynomial map `F`
//! and a convex outer function `g` drawn from a fixed catalog.
//!
//! The crate computes second subderivatives, parabolic subderivatives, critical
//! cones and Lagrange multiplier sets in closed form, and cross-checks every
//! closed-form value against a brute-force difference-quotient oracle.
//!
//! Module map:
//!
//! - [`numkit`]: Jacobi eigensolver, pseudoinverse, polyhedra, vertex-enumeration LP.
//! - [`model`]: extended reals, polynomial maps with exact derivatives, the problem container.
//! - [`catalog`]: outer functions `g` with their first- and second-order objects.
//! - [`oracle`]: difference-quotient estimates used as ground truth.
//! - [`composite`]: multipliers, constraint qualifications and chain rules for `g∘F`.
//! - [`optimality`]: second-order necessary/sufficient conditions and growth checks.

pub mod catalog;
pub mod composite;
pub mod error;
pub mod model;
pub mod numkit;
pub mod optimality;
pub mod oracle;

pub use error::{Error, Result};
pub use model::{CompositeProblem, ExtReal, GridSchedule, PolyMap, Polynomial};

/// Whether a reported value came from a closed-form formula or from the numeric oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    ClosedForm,
    Numeric,
}

impl Provenance {
    pub fn combine(self, other: Provenance) -> Provenance {
        if self == Provenance::Numeric || other == Provenance::Numeric {
            Provenance::Numeric
        } else {
            Provenance::ClosedForm
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed-form",
            Provenance::Numeric => "numeric-fallback",
        }
    }
}
