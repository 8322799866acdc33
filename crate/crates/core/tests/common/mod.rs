//! Instances and property checks shared by the `properties` and `acceptance`
//! test targets.

#![allow(dead_code)]

pub mod properties;

use std::fmt::Debug;
use std::sync::Arc;

use epidiff::catalog::{CriticalConeRepr, OuterFunction, Plq, PlqPiece, TwiceSemidiff};
use epidiff::numkit::{svec, sym_eig, Polyhedron, SymMatrix};
use epidiff::oracle::SampledFunction;
use epidiff::{CompositeProblem, ExtReal, PolyMap, Polynomial};
use nalgebra::{DMatrix, DVector};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn sv(rows: &[&[f64]]) -> DVector<f64> {
    svec(&SymMatrix::from_rows(rows).unwrap())
}

/// Runs `test` on `cases` deterministic draws from `strategy`.
pub fn run_cases<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config { cases, failure_persistence: None, max_shrink_iters: 32, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `c` formatted as a signed term, e.g. ` + 0.5` or ` - 0.5`.
fn signed(c: f64) -> String {
    if c < 0.0 {
        format!(" - {}", -c)
    } else {
        format!(" + {}", c)
    }
}

/// `min x2  s.t.  x2 ≤ x1²` written as `φ = x2`, `F = x2 − x1²`, `g = δ_{R₋}`.
pub fn below_parabola() -> CompositeProblem {
    CompositeProblem::new(
        Polynomial::parse("x2", 2).unwrap(),
        PolyMap::parse(&["x2 - x1^2"], 2).unwrap(),
        OuterFunction::ind_nonpos(1),
    )
    .unwrap()
}

/// `min x2 + a x1²  s.t.  x2 ≥ b x1²`; at the origin the critical cone is the
/// `x1` axis and the second-order value along `e1` is `2(a + b)`.
pub fn tilted_parabola(a: f64, b: f64) -> CompositeProblem {
    CompositeProblem::new(
        Polynomial::parse(&format!("x2{} x1^2", signed(a)), 2).unwrap(),
        PolyMap::parse(&[&format!("{} x1^2 - x2", b)], 2).unwrap(),
        OuterFunction::ind_nonpos(1),
    )
    .unwrap()
}

/// `min x2  s.t.  x2 ≥ x1²`.
pub fn above_parabola() -> CompositeProblem {
    tilted_parabola(0.0, 1.0)
}

/// `min x1⁴` with a zero outer function: a strict minimizer without quadratic growth.
pub fn quartic() -> CompositeProblem {
    CompositeProblem::new(Polynomial::parse("x1^4", 1).unwrap(), PolyMap::identity(1), zero_outer(1)).unwrap()
}

pub fn zero_outer(m: usize) -> OuterFunction {
    OuterFunction::TwiceSemidiff(
        TwiceSemidiff::new(Polynomial::zero(m), Polynomial::zero(m), DVector::zeros(m)).unwrap(),
    )
}

/// `|x1 − 1|` at `x = 1`, `v = 1`.
pub fn shifted_abs() -> CompositeProblem {
    CompositeProblem::new(Polynomial::zero(1), PolyMap::parse(&["x1 - 1"], 1).unwrap(), OuterFunction::abs()).unwrap()
}

/// `|x1 + x2² − 1|` at `x = (1, 0)`, `v = (1, 0)`.
pub fn curved_abs() -> CompositeProblem {
    CompositeProblem::new(
        Polynomial::zero(2),
        PolyMap::parse(&["x1 + x2^2 - 1"], 2).unwrap(),
        OuterFunction::abs(),
    )
    .unwrap()
}

/// `δ_{S₋}(A + X)` over `x = svec(X)` with `A = diag(0, −1)`.
pub fn semidefinite() -> CompositeProblem {
    let a = svec(&SymMatrix::diag(&[0.0, -1.0]));
    CompositeProblem::new(
        Polynomial::zero(3),
        PolyMap::affine(&DMatrix::identity(3, 3), &a).unwrap(),
        OuterFunction::IndNegSemidef { order: 2 },
    )
    .unwrap()
}

/// `F = (x1 + x2², x1 − x2²)` into `R²₋`. At the origin with `v = (1, 0)` the
/// multiplier set is the segment `{y ≥ 0, y1 + y2 = 1}`.
pub fn two_constraints() -> CompositeProblem {
    CompositeProblem::new(
        Polynomial::zero(2),
        PolyMap::parse(&["x1 + x2^2", "x1 - x2^2"], 2).unwrap(),
        OuterFunction::ind_nonpos(2),
    )
    .unwrap()
}

/// A composite problem with the base point and the subgradient `v` to examine.
pub struct ChainCase {
    pub name: &'static str,
    pub prob: CompositeProblem,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

pub fn chain_cases() -> Vec<ChainCase> {
    vec![
        ChainCase { name: "below-parabola", prob: below_parabola(), x: v(&[0.0, 0.0]), v: v(&[0.0, 1.0]) },
        ChainCase { name: "shifted-abs", prob: shifted_abs(), x: v(&[1.0]), v: v(&[1.0]) },
        ChainCase { name: "curved-abs", prob: curved_abs(), x: v(&[1.0, 0.0]), v: v(&[1.0, 0.0]) },
        ChainCase { name: "semidefinite", prob: semidefinite(), x: v(&[0.0; 3]), v: sv(&[&[1.0, 0.0], &[0.0, 0.0]]) },
        ChainCase { name: "two-constraints", prob: two_constraints(), x: v(&[0.0, 0.0]), v: v(&[1.0, 0.0]) },
    ]
}

fn halfspace_piece(rows: &[f64], quad: &[f64], lin: &[f64]) -> PlqPiece {
    let m = lin.len();
    let k = rows.len() / m;
    PlqPiece {
        set: Polyhedron::from_inequalities(DMatrix::from_row_slice(k, m, rows), DVector::zeros(k)).unwrap(),
        quad: SymMatrix::diag(quad),
        lin: v(lin),
        constant: 0.0,
    }
}

/// `½ max(z1, 0)² + |z2|`.
pub fn half_square_plus_abs() -> OuterFunction {
    let pieces = vec![
        halfspace_piece(&[-1.0, 0.0, 0.0, -1.0], &[1.0, 0.0], &[0.0, 1.0]),
        halfspace_piece(&[-1.0, 0.0, 0.0, 1.0], &[1.0, 0.0], &[0.0, -1.0]),
        halfspace_piece(&[1.0, 0.0, 0.0, -1.0], &[0.0, 0.0], &[0.0, 1.0]),
        halfspace_piece(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], &[0.0, -1.0]),
    ];
    OuterFunction::Plq(Plq::new(pieces).unwrap())
}

/// `z` on `z ≥ 0`, `+∞` elsewhere.
pub fn linear_on_halfline() -> OuterFunction {
    OuterFunction::Plq(Plq::new(vec![halfspace_piece(&[-1.0], &[0.0], &[1.0])]).unwrap())
}

/// `Q diag(d) Qᵀ` for a fixed rotation `Q`.
pub fn rotated(d: &[f64], seed: u64) -> SymMatrix {
    let n = d.len();
    let raw = DMatrix::from_fn(n, n, |i, j| (((i * 7 + j * 13) as u64 + seed) as f64).sin());
    let q = raw.qr().q();
    SymMatrix::symmetrize(&(&q * DMatrix::from_diagonal(&v(d)) * q.transpose()))
}

/// An outer function at a point `z` with a subgradient `y`.
pub struct OuterCase {
    pub name: &'static str,
    pub g: OuterFunction,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

impl OuterCase {
    /// `α_i` is a difference of convex functions unless its group starts at
    /// the top eigenvalue; every other catalog tag is convex.
    pub fn is_convex(&self) -> bool {
        !matches!(self.g, OuterFunction::AlphaEig { index, ell, .. } if index > ell)
    }

    pub fn cone(&self) -> CriticalConeRepr {
        self.g.critical_cone(&self.z, &self.y).unwrap()
    }

    /// The function as an oracle input, with the domain projection attached
    /// when the domain is not the whole space.
    pub fn sampled(&self) -> SampledFunction {
        let f = self.g.as_sampled();
        if self.g.has_full_domain() {
            return f;
        }
        let g = self.g.clone();
        f.with_projector(Arc::new(move |z: &DVector<f64>| g.project_domain(z).unwrap_or_else(|_| z.clone())))
    }

    pub fn formula(&self, u: &DVector<f64>) -> ExtReal {
        self.g.second_subderivative(&self.z, &self.y, u).unwrap()
    }
}

pub fn outer_cases() -> Vec<OuterCase> {
    let smooth = TwiceSemidiff::new(
        Polynomial::parse("x1 + 2 x2", 2).unwrap(),
        Polynomial::parse("x1^2 + x1 x2 + 3 x2^2", 2).unwrap(),
        DVector::zeros(2),
    )
    .unwrap();
    let smooth_z = v(&[0.3, -0.2]);
    let smooth_y = smooth.gradient(&smooth_z).unwrap();
    let top = rotated(&[2.0, 0.5, -1.0], 3);
    let q1 = sym_eig(&top).vector(0);
    let top_v = SymMatrix::symmetrize(&(&q1 * q1.transpose()));
    vec![
        OuterCase { name: "abs-kink-extreme", g: OuterFunction::abs(), z: v(&[0.0]), y: v(&[1.0]) },
        OuterCase { name: "abs-kink-interior", g: OuterFunction::abs(), z: v(&[0.0]), y: v(&[0.3]) },
        OuterCase { name: "abs-smooth", g: OuterFunction::abs(), z: v(&[0.5]), y: v(&[1.0]) },
        OuterCase { name: "plq-origin", g: half_square_plus_abs(), z: v(&[0.0, 0.0]), y: v(&[0.0, 0.5]) },
        OuterCase { name: "plq-edge", g: half_square_plus_abs(), z: v(&[1.0, 0.0]), y: v(&[1.0, 1.0]) },
        OuterCase { name: "plq-halfline", g: linear_on_halfline(), z: v(&[0.0]), y: v(&[1.0]) },
        OuterCase { name: "orthant-face", g: OuterFunction::ind_nonpos(2), z: v(&[0.0, -1.0]), y: v(&[2.0, 0.0]) },
        OuterCase { name: "orthant-corner", g: OuterFunction::ind_nonpos(2), z: v(&[0.0, 0.0]), y: v(&[1.0, 0.0]) },
        OuterCase {
            name: "negsemidef-2",
            g: OuterFunction::IndNegSemidef { order: 2 },
            z: svec(&SymMatrix::diag(&[0.0, -1.0])),
            y: svec(&SymMatrix::diag(&[1.0, 0.0])),
        },
        OuterCase {
            name: "negsemidef-3",
            g: OuterFunction::IndNegSemidef { order: 3 },
            z: svec(&SymMatrix::diag(&[0.0, 0.0, -1.0])),
            y: svec(&SymMatrix::diag(&[1.0, 0.0, 0.0])),
        },
        OuterCase {
            name: "max-eig-2",
            g: OuterFunction::MaxEig { order: 2 },
            z: svec(&SymMatrix::diag(&[2.0, 1.0])),
            y: svec(&SymMatrix::diag(&[1.0, 0.0])),
        },
        OuterCase { name: "max-eig-3", g: OuterFunction::MaxEig { order: 3 }, z: svec(&top), y: svec(&top_v) },
        OuterCase {
            name: "max-eig-cluster",
            g: OuterFunction::MaxEig { order: 3 },
            z: svec(&SymMatrix::diag(&[1.0, 1.0, 0.0])),
            y: svec(&SymMatrix::diag(&[0.5, 0.5, 0.0])),
        },
        OuterCase {
            name: "sum-top-2",
            g: OuterFunction::SumTopEig { order: 3, count: 2 },
            z: svec(&SymMatrix::diag(&[3.0, 2.0, 1.0])),
            y: svec(&SymMatrix::diag(&[1.0, 1.0, 0.0])),
        },
        OuterCase {
            name: "alpha-eig-middle",
            g: OuterFunction::AlphaEig { order: 3, index: 2, ell: 1 },
            z: svec(&SymMatrix::diag(&[3.0, 2.0, 1.0])),
            y: svec(&SymMatrix::diag(&[0.0, 1.0, 0.0])),
        },
        OuterCase {
            name: "alpha-eig-leading",
            g: OuterFunction::AlphaEig { order: 3, index: 2, ell: 2 },
            z: svec(&SymMatrix::diag(&[2.0, 2.0, 1.0])),
            y: svec(&SymMatrix::diag(&[1.0, 1.0, 0.0])),
        },
        OuterCase { name: "twice-semidiff", g: OuterFunction::TwiceSemidiff(smooth), z: smooth_z, y: smooth_y },
    ]
}

/// A critical direction built from `raw`: its projection onto the cone (or
/// `raw` itself when it already lies in a cone without projector), normalized.
pub fn critical_direction(cone: &CriticalConeRepr, raw: &DVector<f64>) -> Option<DVector<f64>> {
    let w = match cone.project(raw) {
        Some(p) => p,
        None if cone.contains(raw) => raw.clone(),
        None => return None,
    };
    let n = w.norm();
    if n < 1e-6 {
        return None;
    }
    let w = w / n;
    cone.contains(&w).then_some(w)
}

/// Whether every direction projects to zero, i.e. the cone is `{0}` as far as
/// the projector can tell.
pub fn cone_is_trivial(cone: &CriticalConeRepr) -> bool {
    match cone.as_cone() {
        Some(c) => c.is_trivial().unwrap(),
        None => false,
    }
}
