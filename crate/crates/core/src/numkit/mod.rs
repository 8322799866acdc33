//! Dense numerical kernels: symmetric eigendecomposition, pseudoinverse,
//! symmetric-matrix vectorization and exact polyhedral computations by
//! vertex enumeration.

mod eig;
mod linalg;
mod polyhedron;

pub use eig::{
    clusters, pinv, pinv_default, smat, sym_eig, svec, svec_dim, sym_order, SymEig, SymMatrix,
};
pub use linalg::{nullspace, op_norm, orth_complement, rank, solve_least_squares};
pub use polyhedron::{lp_max, tangent_cone, vertices, ConeGenerators, PolyCone, Polyhedron};

/// Default activity tolerance for tangent-cone construction.
pub const ACT_TOL: f64 = 1e-9;
