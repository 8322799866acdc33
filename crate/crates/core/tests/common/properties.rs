//! Invariants for every module. Each check runs a fixed number of
//! deterministic proptest cases and reports the first failure as text.

use epidiff::catalog::{CriticalConeRepr, OuterFunction};
use epidiff::composite::{assembled_function, lipschitz_constant, ChainContext, ChainSettings};
use epidiff::model::Monomial;
use epidiff::numkit::{pinv_default, smat, svec, sym_eig, tangent_cone, Polyhedron, SymMatrix};
use epidiff::optimality::{check_sonc, check_ssosc, growth_scan, Stationary};
use epidiff::oracle::{
    estimate_prox_modulus, estimate_second_subderivative, within_tolerance, z_grid_per_axis, SampledFunction,
};
use epidiff::{ExtReal, GridSchedule, PolyMap, Polynomial};
use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;

pub struct Property {
    pub module: &'static str,
    pub name: &'static str,
    pub check: fn() -> Result<(), String>,
}

pub const ALL: &[Property] = &[
    Property { module: "numkit", name: "sym_eig_reconstructs", check: sym_eig_reconstructs },
    Property { module: "numkit", name: "pseudoinverse_penrose", check: pseudoinverse_penrose },
    Property { module: "numkit", name: "lp_max_dominates_feasible_points", check: lp_max_dominates_feasible_points },
    Property { module: "numkit", name: "box_vertex_tangent_is_orthant", check: box_vertex_tangent_is_orthant },
    Property { module: "numkit", name: "svec_is_isometric", check: svec_is_isometric },
    Property { module: "model", name: "polymap_derivatives_match_differences", check: polymap_derivatives_match_differences },
    Property { module: "model", name: "integer_points_evaluate_exactly", check: integer_points_evaluate_exactly },
    Property { module: "model", name: "plus_inf_absorbs", check: plus_inf_absorbs },
    Property { module: "catalog", name: "outer_functions_are_convex", check: outer_functions_are_convex },
    Property { module: "catalog", name: "second_subderivative_nonnegative", check: second_subderivative_nonnegative },
    Property { module: "catalog", name: "second_subderivative_domain_is_critical_cone", check: second_subderivative_domain_is_critical_cone },
    Property { module: "catalog", name: "parabolic_subderivative_lipschitz", check: parabolic_subderivative_lipschitz },
    Property { module: "catalog", name: "parabolic_duality", check: parabolic_duality },
    Property { module: "catalog", name: "plq_face_consistency", check: plq_face_consistency },
    Property { module: "oracle", name: "refinement_does_not_increase", check: refinement_does_not_increase },
    Property { module: "oracle", name: "oracle_matches_formulas", check: oracle_matches_formulas },
    Property { module: "oracle", name: "prox_lower_bound", check: prox_lower_bound },
    Property { module: "oracle", name: "off_cone_is_plus_inf", check: off_cone_is_plus_inf },
    Property { module: "composite", name: "primal_equals_dual", check: primal_equals_dual },
    Property { module: "composite", name: "maximizer_in_tau_ball", check: maximizer_in_tau_ball },
    Property { module: "composite", name: "multiplier_sandwich", check: multiplier_sandwich },
    Property { module: "composite", name: "chain_domain_is_critical_cone", check: chain_domain_is_critical_cone },
    Property { module: "composite", name: "chain_matches_oracle", check: chain_matches_oracle },
    Property { module: "composite", name: "critical_cone_independent_of_multiplier", check: critical_cone_independent_of_multiplier },
    Property { module: "optimality", name: "ssosc_margin_gives_growth", check: ssosc_margin_gives_growth },
    Property { module: "optimality", name: "negative_curvature_defeats_growth", check: negative_curvature_defeats_growth },
    Property { module: "optimality", name: "sum_rule_matches_oracle", check: sum_rule_matches_oracle },
    Property { module: "optimality", name: "ssosc_implies_sonc", check: ssosc_implies_sonc },
];

fn tol(x: f64) -> f64 {
    0.05f64.max(0.05 * x.abs())
}

fn dvec(dim: usize, r: f64) -> impl Strategy<Value = DVector<f64>> {
    vec(-r..r, dim).prop_map(DVector::from_vec)
}

fn for_each<T>(items: &[T], name: impl Fn(&T) -> String, f: impl Fn(&T) -> Result<(), String>) -> Result<(), String> {
    for it in items {
        f(it).map_err(|e| format!("{}: {}", name(it), e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- numkit

fn sym_strategy() -> impl Strategy<Value = SymMatrix> {
    (1usize..=6).prop_flat_map(|n| {
        vec(-5.0f64..5.0, n * n).prop_map(move |v| SymMatrix::symmetrize(&DMatrix::from_row_slice(n, n, &v)))
    })
}

pub fn sym_eig_reconstructs() -> Result<(), String> {
    run_cases(256, sym_strategy(), |a| {
        let e = sym_eig(&a);
        let d = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        let err = (&e.vectors * d * e.vectors.transpose() - a.matrix()).norm();
        prop_assert!(err <= 1e-10 * (1.0 + a.frobenius()), "reconstruction error {}", err);
        for w in e.values.windows(2) {
            prop_assert!(w[0] >= w[1], "eigenvalues not descending");
        }
        let n = a.n();
        prop_assert!((e.vectors.transpose() * &e.vectors - DMatrix::identity(n, n)).norm() < 1e-10);
        Ok(())
    })
}

pub fn pseudoinverse_penrose() -> Result<(), String> {
    let spectrum = vec(prop_oneof![Just(0.0), 0.5f64..3.0, -3.0f64..-0.5], 1..=5);
    run_cases(256, (spectrum, 0u64..1000), |(d, seed)| {
        let a = rotated(&d, seed);
        let p = pinv_default(&a);
        let (am, pm) = (a.matrix(), p.matrix());
        prop_assert!((am * pm * am - am).norm() < 1e-8, "A A⁺ A ≠ A");
        prop_assert!((pm * am * pm - pm).norm() < 1e-8, "A⁺ A A⁺ ≠ A⁺");
        Ok(())
    })
}

pub fn lp_max_dominates_feasible_points() -> Result<(), String> {
    let strat = (vec(vec(-1.0f64..1.0, 3), 1..5), vec(-1.0f64..1.0, 3), any::<u64>());
    run_cases(64, strat, |(rows, c, seed)| {
        // The cube keeps the polyhedron bounded; the origin stays feasible.
        let m = rows.len();
        let g = DMatrix::from_fn(m, 3, |i, j| rows[i][j]);
        let p = Polyhedron::from_inequalities(g, DVector::from_element(m, 0.5))
            .unwrap()
            .intersect(&Polyhedron::cube(3, 1.0))
            .unwrap();
        let c = DVector::from_vec(c);
        let val = p.lp_max(&c).unwrap().0.finite().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0;
        while hits < 100 {
            let y = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            if p.contains(&y, 0.0) {
                hits += 1;
                prop_assert!(val >= c.dot(&y) - 1e-9, "LP value {} below ⟨c, y⟩ = {}", val, c.dot(&y));
            }
        }
        Ok(())
    })
}

pub fn box_vertex_tangent_is_orthant() -> Result<(), String> {
    let strat = (1usize..=4).prop_flat_map(|n| (vec(-3.0f64..3.0, n), vec(0.1f64..3.0, n), vec(any::<bool>(), n)));
    run_cases(128, strat, |(lo, width, upper)| {
        let n = lo.len();
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        let bx = Polyhedron::boxed(&lo, &hi).unwrap();
        let x = DVector::from_fn(n, |i, _| if upper[i] { hi[i] } else { lo[i] });
        let t = tangent_cone(&bx, &x, 1e-9).unwrap();
        prop_assert_eq!(t.eq_matrix().nrows(), 0);
        let mut rows: Vec<Vec<f64>> = t.ineq_matrix().row_iter().map(|r| r.iter().cloned().collect()).collect();
        let mut expected: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { if upper[i] { 1.0 } else { -1.0 } } else { 0.0 }).collect())
            .collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(rows, expected);
        Ok(())
    })
}

pub fn svec_is_isometric() -> Result<(), String> {
    let strat = (1usize..=5).prop_flat_map(|n| (vec(-3.0f64..3.0, n * n), vec(-3.0f64..3.0, n * n), Just(n)));
    run_cases(128, strat, |(a, b, n)| {
        let a = SymMatrix::symmetrize(&DMatrix::from_row_slice(n, n, &a));
        let b = SymMatrix::symmetrize(&DMatrix::from_row_slice(n, n, &b));
        let gap = (svec(&a).dot(&svec(&b)) - a.inner(&b)).abs();
        prop_assert!(gap <= 1e-12 * (1.0 + a.frobenius() * b.frobenius()), "inner product gap {}", gap);
        prop_assert!((smat(&svec(&a)).unwrap().matrix() - a.matrix()).norm() <= 1e-14 * (1.0 + a.frobenius()));
        Ok(())
    })
}

// ---------------------------------------------------------------- model

fn poly_strategy(n: usize) -> impl Strategy<Value = Polynomial> {
    vec((-3.0f64..3.0, vec(0u32..=2, n)), 1..6).prop_map(move |terms| {
        let terms = terms
            .into_iter()
            .map(|(c, mut e)| {
                while e.iter().sum::<u32>() > 4 {
                    let i = e.iter().position(|&k| k > 0).unwrap();
                    e[i] -= 1;
                }
                Monomial { coeff: c, exps: e }
            })
            .collect();
        Polynomial::new(n, terms).unwrap()
    })
}

pub fn polymap_derivatives_match_differences() -> Result<(), String> {
    let strat = (poly_strategy(3), poly_strategy(3), vec(-1.0f64..1.0, 3), vec(-1.0f64..1.0, 3));
    run_cases(256, strat, |(p, q, x, w)| {
        let scale = 1.0
            + p.terms().iter().chain(q.terms()).map(|m| m.coeff.abs()).sum::<f64>();
        let map = PolyMap::new(3, vec![p, q]).unwrap();
        let x = DVector::from_vec(x);
        let w = DVector::from_vec(w);
        let h = 1e-4;
        let jac = map.jacobian(&x).unwrap();
        for j in 0..3 {
            let mut e = DVector::zeros(3);
            e[j] = h;
            let fd = (map.eval(&(&x + &e)).unwrap() - map.eval(&(&x - &e)).unwrap()) / (2.0 * h);
            prop_assert!((fd - jac.column(j)).amax() <= 1e-5 * scale, "Jacobian column {}", j);
        }
        let hw = &w * h;
        let fd2 = (map.eval(&(&x + &hw)).unwrap() - map.eval(&x).unwrap() * 2.0 + map.eval(&(&x - &hw)).unwrap())
            / (h * h);
        let exact = map.second_form(&x, &w).unwrap();
        prop_assert!((&fd2 - &exact).amax() <= 1e-5 * scale, "second form {} vs {}", exact, fd2);
        Ok(())
    })
}

pub fn integer_points_evaluate_exactly() -> Result<(), String> {
    let strat = (vec((-9i64..=9, vec(0u32..=3, 2)), 1..6), -4i64..=4, -4i64..=4);
    run_cases(256, strat, |(terms, a, b)| {
        let exact: i64 = terms.iter().map(|(c, e)| c * a.pow(e[0]) * b.pow(e[1])).sum();
        let monos = terms.iter().map(|(c, e)| Monomial { coeff: *c as f64, exps: e.clone() }).collect();
        let p = Polynomial::new(2, monos).unwrap();
        prop_assert_eq!(p.eval(&v(&[a as f64, b as f64])).unwrap(), exact as f64);
        Ok(())
    })
}

pub fn plus_inf_absorbs() -> Result<(), String> {
    run_cases(256, (vec(-1e10f64..1e10, 0..6), 0usize..4), |(xs, infs)| {
        for &x in &xs {
            prop_assert_eq!(ExtReal::Finite(x) + ExtReal::PlusInf, ExtReal::PlusInf);
            prop_assert_eq!(ExtReal::PlusInf + ExtReal::Finite(x), ExtReal::PlusInf);
            prop_assert!(ExtReal::Finite(x) < ExtReal::PlusInf);
        }
        prop_assert_eq!(ExtReal::min_of(vec![ExtReal::PlusInf; infs]), ExtReal::PlusInf);
        let mixed = xs.iter().map(|&x| ExtReal::Finite(x)).chain(std::iter::repeat(ExtReal::PlusInf).take(infs));
        let expected = xs.iter().cloned().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
        prop_assert_eq!(ExtReal::min_of(mixed), expected.map_or(ExtReal::PlusInf, ExtReal::Finite));
        Ok(())
    })
}

// ---------------------------------------------------------------- catalog

fn outer_value(g: &OuterFunction, z: &DVector<f64>) -> ExtReal {
    g.eval(z).unwrap()
}

pub fn outer_functions_are_convex() -> Result<(), String> {
    let cases: Vec<OuterCase> = outer_cases().into_iter().filter(|c| c.is_convex()).collect();
    for_each(&cases, |c| c.name.to_string(), |c| {
        let m = c.z.len();
        run_cases(500, (dvec(m, 2.0), dvec(m, 2.0), 0.0f64..1.0), |(da, db, lam)| {
            let a = &c.z + da;
            let b = &c.z + db;
            let pa = c.g.project_domain(&a).unwrap();
            let pb = c.g.project_domain(&b).unwrap();
            for (a, b) in [(a, b), (pa, pb)] {
                let mid = &a * lam + &b * (1.0 - lam);
                if let (ExtReal::Finite(ga), ExtReal::Finite(gb)) = (outer_value(&c.g, &a), outer_value(&c.g, &b)) {
                    let rhs = lam * ga + (1.0 - lam) * gb;
                    let lhs = outer_value(&c.g, &mid);
                    prop_assert!(
                        lhs <= ExtReal::Finite(rhs + 1e-9 * (1.0 + rhs.abs())),
                        "g(mid) = {} above the chord {}",
                        lhs,
                        rhs
                    );
                }
            }
            Ok(())
        })
    })
}

/// Random direction together with its projection onto the critical cone.
fn with_projection(cone: &CriticalConeRepr, raw: DVector<f64>) -> Vec<DVector<f64>> {
    let mut out = vec![raw.clone()];
    if let Some(p) = cone.project(&raw) {
        out.push(p);
    }
    out
}

pub fn second_subderivative_nonnegative() -> Result<(), String> {
    let cases: Vec<OuterCase> = outer_cases().into_iter().filter(|c| c.is_convex()).collect();
    for_each(&cases, |c| c.name.to_string(), |c| {
        let cone = c.cone();
        run_cases(200, dvec(c.z.len(), 2.0), |raw| {
            for u in with_projection(&cone, raw) {
                if let ExtReal::Finite(val) = c.formula(&u) {
                    prop_assert!(val >= -1e-10 * (1.0 + u.norm_squared()), "d²g = {} at {}", val, u);
                }
            }
            Ok(())
        })
    })
}

pub fn second_subderivative_domain_is_critical_cone() -> Result<(), String> {
    for_each(&outer_cases(), |c| c.name.to_string(), |c| {
        let cone = c.cone();
        run_cases(200, dvec(c.z.len(), 2.0), |raw| {
            for u in with_projection(&cone, raw) {
                let finite = c.formula(&u).is_finite();
                prop_assert_eq!(finite, cone.contains(&u), "direction {}", u);
            }
            Ok(())
        })
    })
}

fn has_closed_parabolic(g: &OuterFunction) -> bool {
    matches!(g, OuterFunction::Plq(_) | OuterFunction::IndPolyhedron(_) | OuterFunction::TwiceSemidiff(_))
}

/// A direction `w` with `dg(z)(w)` finite, obtained by pulling `z + 0.1 raw`
/// back into the domain.
fn domain_direction(g: &OuterFunction, z: &DVector<f64>, raw: &DVector<f64>) -> DVector<f64> {
    (g.project_domain(&(z + raw * 0.1)).unwrap() - z) / 0.1
}

pub fn parabolic_subderivative_lipschitz() -> Result<(), String> {
    let cases: Vec<OuterCase> = outer_cases().into_iter().filter(|c| has_closed_parabolic(&c.g)).collect();
    for_each(&cases, |c| c.name.to_string(), |c| {
        let m = c.z.len();
        let ell = lipschitz_constant(&c.g, &c.z).unwrap().ell;
        run_cases(100, (dvec(m, 1.0), dvec(m, 2.0), dvec(m, 2.0)), |(raw, u1, u2)| {
            let w = domain_direction(&c.g, &c.z, &raw);
            let (p1, _) = c.g.parabolic_subderivative(&c.z, &w, &u1).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let (p2, _) = c.g.parabolic_subderivative(&c.z, &w, &u2).map_err(|e| TestCaseError::fail(e.to_string()))?;
            if let (Some(a), Some(b)) = (p1.finite(), p2.finite()) {
                let bound = ell * (&u1 - &u2).norm() + 1e-9 * (1.0 + a.abs() + b.abs());
                prop_assert!((a - b).abs() <= bound, "|{} − {}| exceeds ℓ‖Δu‖ with ℓ = {}", a, b, ell);
            }
            Ok(())
        })
    })
}

pub fn parabolic_duality() -> Result<(), String> {
    let cases: Vec<OuterCase> = outer_cases().into_iter().filter(|c| c.g.is_polyhedral()).collect();
    let sched = GridSchedule::default();
    for_each(&cases, |c| c.name.to_string(), |c| {
        let m = c.z.len();
        let cone = c.cone();
        if cone_is_trivial(&cone) {
            return Ok(());
        }
        let p = z_grid_per_axis(m, &sched);
        let step = 20.0 / (p - 1) as f64;
        run_cases(20, dvec(m, 1.0), |raw| {
            let Some(u) = critical_direction(&cone, &raw) else { return Ok(()) };
            let mut best = ExtReal::PlusInf;
            for k in 0..p.pow(m as u32) {
                let zeta = DVector::from_fn(m, |i, _| -10.0 + step * ((k / p.pow(i as u32)) % p) as f64);
                let (val, _) = c.g.parabolic_subderivative(&c.z, &u, &zeta).unwrap();
                if let ExtReal::Finite(val) = val {
                    best = best.min(ExtReal::Finite(val - zeta.dot(&c.y)));
                }
            }
            let formula = c.formula(&u);
            prop_assert!(within_tolerance(&formula, &best), "d²g = {} but grid infimum {} at {}", formula, best, u);
            Ok(())
        })
    })
}

pub fn plq_face_consistency() -> Result<(), String> {
    let cases: Vec<OuterCase> =
        outer_cases().into_iter().filter(|c| matches!(c.g, OuterFunction::Plq(_))).collect();
    for_each(&cases, |c| c.name.to_string(), |c| {
        let OuterFunction::Plq(plq) = &c.g else { unreachable!() };
        let cone = c.cone();
        if cone_is_trivial(&cone) {
            return Ok(());
        }
        run_cases(100, dvec(c.z.len(), 1.0), |raw| {
            let Some(u) = critical_direction(&cone, &raw) else { return Ok(()) };
            let val = c.formula(&u).finite().expect("finite on the critical cone");
            for i in plq.active(&c.z) {
                if plq.tangent(i, &c.z).unwrap().contains(&u, 1e-9) {
                    let face = plq.pieces()[i].quad.quad(&u);
                    prop_assert!((val - face).abs() <= 1e-9 * (1.0 + val.abs()), "piece {}: {} vs {}", i, face, val);
                }
            }
            let doubled = c.formula(&(&u * 2.0)).finite().unwrap();
            prop_assert!((doubled - 4.0 * val).abs() <= 1e-9 * (1.0 + val.abs()), "not 2-homogeneous");
            Ok(())
        })
    })
}

// ---------------------------------------------------------------- oracle

/// A function, a base point and subgradient, its critical cone and the
/// closed-form second subderivative.
struct OracleCase {
    name: String,
    f: SampledFunction,
    x: DVector<f64>,
    v: DVector<f64>,
    cone: CriticalConeRepr,
    formula: Box<dyn Fn(&DVector<f64>) -> ExtReal>,
}

fn oracle_cases() -> Vec<OracleCase> {
    let mut out = Vec::new();
    for c in outer_cases() {
        let cone = c.cone();
        if cone_is_trivial(&cone) {
            continue;
        }
        let f = c.sampled();
        let (g, z, y) = (c.g.clone(), c.z.clone(), c.y.clone());
        out.push(OracleCase {
            name: c.name.to_string(),
            f,
            x: z.clone(),
            v: y.clone(),
            cone,
            formula: Box::new(move |u| g.second_subderivative(&z, &y, u).unwrap()),
        });
    }
    for c in chain_cases() {
        let ctx = ChainContext::new(&c.prob, &c.x, &c.v, &ChainSettings::default()).unwrap();
        let cone = ctx.critical_cone().unwrap();
        let f = assembled_function(&c.prob, false);
        let ChainCase { prob, x, v, .. } = c;
        let (xc, vc) = (x.clone(), v.clone());
        out.push(OracleCase {
            name: format!("chain {}", c.name),
            f,
            x,
            v,
            cone,
            formula: Box::new(move |w| {
                let ctx = ChainContext::new(&prob, &xc, &vc, &ChainSettings::default()).unwrap();
                ctx.second_subderivative(w).unwrap().dual
            }),
        });
    }
    out
}

fn estimate(c: &OracleCase, w: &DVector<f64>, sched: &GridSchedule) -> ExtReal {
    estimate_second_subderivative(&c.f, &c.x, &c.v, w, sched).unwrap()
}

pub fn refinement_does_not_increase() -> Result<(), String> {
    let coarse = GridSchedule::default();
    let fine = GridSchedule { t0: coarse.t0 / 2.0, steps: coarse.steps * 2, ..coarse };
    for_each(&oracle_cases(), |c| c.name.clone(), |c| {
        run_cases(5, dvec(c.x.len(), 1.0), |raw| {
            let Some(w) = critical_direction(&c.cone, &raw) else { return Ok(()) };
            let a = estimate(c, &w, &coarse);
            let b = estimate(c, &w, &fine);
            if let ExtReal::Finite(a) = a {
                prop_assert!(b <= ExtReal::Finite(a + tol(a)), "refined {} above coarse {} at {}", b, a, w);
            }
            Ok(())
        })
    })
}

pub fn oracle_matches_formulas() -> Result<(), String> {
    let sched = GridSchedule::default();
    for_each(&oracle_cases(), |c| c.name.clone(), |c| {
        run_cases(50, dvec(c.x.len(), 1.0), |raw| {
            let Some(w) = critical_direction(&c.cone, &raw) else { return Ok(()) };
            let formula = (c.formula)(&w);
            let est = estimate(c, &w, &sched);
            prop_assert!(within_tolerance(&formula, &est), "formula {} vs oracle {} at {}", formula, est, w);
            Ok(())
        })
    })
}

pub fn prox_lower_bound() -> Result<(), String> {
    let concave = SampledFunction::from_fn(1, "-x^2", |x| ExtReal::Finite(-x[0] * x[0]));
    let saddle = SampledFunction::from_fn(2, "x1^2 - x2^2", |x| ExtReal::Finite(x[0] * x[0] - x[1] * x[1]));
    let abs = OuterFunction::abs().as_sampled();
    let nsd = outer_cases().into_iter().find(|c| c.name == "negsemidef-2").unwrap();
    let cases = vec![
        ("concave", concave, v(&[0.0]), v(&[0.0])),
        ("saddle", saddle, v(&[0.0, 0.0]), v(&[0.0, 0.0])),
        ("abs", abs, v(&[0.0]), v(&[0.5])),
        ("below-parabola", assembled_function(&below_parabola(), false), v(&[0.0, 0.0]), v(&[0.0, 1.0])),
        ("negsemidef-2", nsd.sampled(), nsd.z.clone(), nsd.y.clone()),
    ];
    let sched = GridSchedule::default();
    for_each(&cases, |c| c.0.to_string(), |(_, f, x, vv)| {
        let r = estimate_prox_modulus(f, x, vv, 0.5, 2000, 11).map_err(|e| e.to_string())?;
        run_cases(20, dvec(x.len(), 1.0), |w| {
            let est = estimate_second_subderivative(f, x, vv, &w, &sched).unwrap();
            let bound = -r * w.norm_squared();
            prop_assert!(est >= ExtReal::Finite(bound - tol(bound)), "estimate {} below −r‖w‖² = {} (r = {})", est, bound, r);
            Ok(())
        })
    })
}

pub fn off_cone_is_plus_inf() -> Result<(), String> {
    let sched = GridSchedule::default();
    for_each(&oracle_cases(), |c| c.name.clone(), |c| {
        run_cases(20, dvec(c.x.len(), 1.0), |raw| {
            let n = raw.norm();
            if n < 1e-3 {
                return Ok(());
            }
            let w = raw / n;
            let Some(p) = c.cone.project(&w) else { return Ok(()) };
            if (&w - p).norm() < 0.2 {
                return Ok(());
            }
            let est = estimate(c, &w, &sched);
            prop_assert_eq!(est, ExtReal::PlusInf, "direction {} off the cone", w);
            Ok(())
        })
    })
}

// ---------------------------------------------------------------- composite

fn with_contexts(f: impl Fn(&ChainCase, &ChainContext<'_>, &CriticalConeRepr) -> Result<(), String>) -> Result<(), String> {
    for_each(&chain_cases(), |c| c.name.to_string(), |c| {
        let ctx = ChainContext::new(&c.prob, &c.x, &c.v, &ChainSettings::default()).map_err(|e| e.to_string())?;
        let cone = ctx.critical_cone().map_err(|e| e.to_string())?;
        f(c, &ctx, &cone)
    })
}

pub fn primal_equals_dual() -> Result<(), String> {
    with_contexts(|c, ctx, cone| {
        run_cases(30, dvec(c.x.len(), 1.0), |raw| {
            let Some(w) = critical_direction(cone, &raw) else { return Ok(()) };
            let info = ctx.second_subderivative(&w).unwrap();
            prop_assert!(within_tolerance(&info.primal, &info.dual), "primal {} dual {} at {}", info.primal, info.dual, w);
            Ok(())
        })
    })
}

pub fn maximizer_in_tau_ball() -> Result<(), String> {
    with_contexts(|c, ctx, cone| {
        run_cases(30, dvec(c.x.len(), 1.0), |raw| {
            let Some(w) = critical_direction(cone, &raw) else { return Ok(()) };
            let info = ctx.second_subderivative(&w).unwrap();
            let n = info.argmax_y.norm();
            prop_assert!(n <= ctx.tau + 1e-8, "‖y‖ = {} exceeds τ = {}", n, ctx.tau);
            Ok(())
        })
    })
}

/// `⟨y, ∇²F(x)(w, w)⟩ + d²g(F(x), y)(∇F(x) w)` for one multiplier.
fn multiplier_value(ctx: &ChainContext<'_>, y: &DVector<f64>, w: &DVector<f64>) -> ExtReal {
    let curv = ctx.prob.map.second_form(&ctx.x, w).unwrap();
    ctx.prob.outer.second_subderivative(&ctx.z, y, &(&ctx.jac * w)).unwrap() + y.dot(&curv)
}

pub fn multiplier_sandwich() -> Result<(), String> {
    with_contexts(|c, ctx, cone| {
        let els = &ctx.multipliers.elements;
        let mut ys = els.clone();
        for pair in els.windows(2) {
            ys.push((&pair[0] + &pair[1]) * 0.5);
        }
        run_cases(30, dvec(c.x.len(), 1.0), |raw| {
            let Some(w) = critical_direction(cone, &raw) else { return Ok(()) };
            let info = ctx.second_subderivative(&w).unwrap();
            let dual = info.dual.finite().unwrap();
            for y in &ys {
                let val = multiplier_value(ctx, y, &w);
                prop_assert!(val <= ExtReal::Finite(dual + 1e-9 * (1.0 + dual.abs())), "y = {} gives {} above the maximum {}", y, val, dual);
            }
            prop_assert!(info.dual <= info.primal + ExtReal::Finite(tol(dual)), "dual {} above primal {}", info.dual, info.primal);
            Ok(())
        })
    })
}

pub fn chain_domain_is_critical_cone() -> Result<(), String> {
    with_contexts(|c, ctx, cone| {
        run_cases(100, dvec(c.x.len(), 1.0), |raw| {
            for w in with_projection(cone, raw) {
                let info = ctx.second_subderivative(&w).unwrap();
                prop_assert_eq!(info.dual.is_finite(), cone.contains(&w), "direction {}", w);
            }
            Ok(())
        })
    })
}

pub fn chain_matches_oracle() -> Result<(), String> {
    let sched = GridSchedule::default();
    with_contexts(|c, ctx, cone| {
        let f = assembled_function(&c.prob, false);
        run_cases(10, dvec(c.x.len(), 1.0), |raw| {
            let Some(w) = critical_direction(cone, &raw) else { return Ok(()) };
            let dual = ctx.second_subderivative(&w).unwrap().dual;
            let est = estimate_second_subderivative(&f, &c.x, &c.v, &w, &sched).unwrap();
            prop_assert!(within_tolerance(&dual, &est), "chain {} vs oracle {} at {}", dual, est, w);
            Ok(())
        })
    })
}

pub fn critical_cone_independent_of_multiplier() -> Result<(), String> {
    with_contexts(|c, ctx, cone| {
        let els = &ctx.multipliers.elements;
        let mut ys = els.clone();
        for pair in els.windows(2) {
            ys.push((&pair[0] * 0.3 + &pair[1] * 0.7).clone());
        }
        let cones: Vec<CriticalConeRepr> = ys
            .iter()
            .map(|y| ctx.prob.outer.critical_cone(&ctx.z, y).unwrap().pullback(&ctx.jac).unwrap())
            .collect();
        run_cases(100, dvec(c.x.len(), 1.0), |raw| {
            for w in with_projection(cone, raw) {
                let member = cone.contains(&w);
                for (y, k) in ys.iter().zip(&cones) {
                    prop_assert_eq!(k.contains(&w), member, "multiplier {} disagrees at {}", y, w);
                }
            }
            Ok(())
        })
    })
}

// ---------------------------------------------------------------- optimality

fn family(min_gap: f64) -> impl Strategy<Value = (f64, f64)> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_filter("|a + b| too small", move |(a, b)| (a + b).abs() > min_gap)
}

fn origin() -> DVector<f64> {
    v(&[0.0, 0.0])
}

pub fn ssosc_margin_gives_growth() -> Result<(), String> {
    let strat = family(0.05).prop_filter("positive curvature", |(a, b)| a + b > 0.0);
    run_cases(16, strat, |(a, b)| {
        let prob = tilted_parabola(a, b);
        let rep = check_ssosc(&prob, &origin(), 8, 7).unwrap();
        let m = rep.worst_value.finite().unwrap();
        prop_assert!(rep.holds, "SSOSC fails with worst value {}", m);
        prop_assert!((m - 2.0 * (a + b)).abs() <= 1e-6, "worst value {} but 2(a + b) = {}", m, 2.0 * (a + b));
        let g = growth_scan(&prob, &origin(), m / 2.0, 400, 7).unwrap();
        prop_assert!(g.passed(), "growth with ℓ = {} failed: found {}", m / 2.0, g.ell_found);
        Ok(())
    })
}

pub fn negative_curvature_defeats_growth() -> Result<(), String> {
    let strat = family(0.05).prop_filter("negative curvature", |(a, b)| a + b < 0.0);
    run_cases(16, strat, |(a, b)| {
        let prob = tilted_parabola(a, b);
        let sonc = check_sonc(&prob, &origin(), 8, 7).unwrap();
        prop_assert!(sonc.worst_value < ExtReal::Finite(0.0), "worst value {}", sonc.worst_value);
        for ell in [0.01, 0.1, 1.0] {
            let g = growth_scan(&prob, &origin(), ell, 400, 7).unwrap();
            prop_assert!(!g.passed(), "growth with ℓ = {} passed", ell);
        }
        Ok(())
    })
}

pub fn sum_rule_matches_oracle() -> Result<(), String> {
    let sched = GridSchedule::default();
    run_cases(12, (family(0.05), -2.0f64..2.0), |((a, b), s)| {
        let prob = tilted_parabola(a, b);
        let st = Stationary::new(&prob, &origin(), &ChainSettings::default()).unwrap();
        let psi = assembled_function(&prob, true);
        let w = v(&[s, 0.0]);
        let val = st.value(&w).unwrap();
        let est = estimate_second_subderivative(&psi, &origin(), &origin(), &w, &sched).unwrap();
        prop_assert!(within_tolerance(&val, &est), "sum rule {} vs oracle {} (a = {}, b = {})", val, est, a, b);
        Ok(())
    })
}

pub fn ssosc_implies_sonc() -> Result<(), String> {
    run_cases(24, family(0.0), |(a, b)| {
        let prob = tilted_parabola(a, b);
        let ssosc = check_ssosc(&prob, &origin(), 8, 7).unwrap();
        let sonc = check_sonc(&prob, &origin(), 8, 7).unwrap();
        prop_assert!(!ssosc.holds || sonc.holds, "SSOSC holds but SONC fails (a = {}, b = {})", a, b);
        Ok(())
    })
}
