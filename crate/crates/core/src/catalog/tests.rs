use nalgebra::{DMatrix, DVector};

use super::*;
use crate::model::Polynomial;
use crate::numkit::{svec, SymMatrix};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn sv(rows: &[&[f64]]) -> DVector<f64> {
    svec(&SymMatrix::from_rows(rows).unwrap())
}

fn halfline() -> OuterFunction {
    OuterFunction::ind_nonpos(1)
}

#[test]
fn values() {
    assert_eq!(OuterFunction::abs().eval(&v(&[0.5])).unwrap(), ExtReal::Finite(0.5));
    let nsd = OuterFunction::IndNegSemidef { order: 2 };
    assert_eq!(nsd.eval(&sv(&[&[0.0, 0.0], &[0.0, -1.0]])).unwrap(), ExtReal::Finite(0.0));
    assert_eq!(nsd.eval(&sv(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap(), ExtReal::PlusInf);
    let me = OuterFunction::MaxEig { order: 2 };
    let val = me.eval(&sv(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap().finite().unwrap();
    assert!((val - 1.0).abs() < 1e-12);
    assert!(me.eval(&v(&[1.0, 2.0])).is_err());
}

#[test]
fn subdifferentials() {
    let SubdiffRepr::Polyhedron(p) = OuterFunction::abs().subdiff(&v(&[0.0])).unwrap() else { panic!() };
    assert_eq!(p.vertices().unwrap(), vec![v(&[-1.0]), v(&[1.0])]);

    let sd = halfline().subdiff(&v(&[0.0])).unwrap();
    assert!(sd.contains(&v(&[3.0])));
    assert!(sd.contains(&v(&[0.0])));
    assert!(!sd.contains(&v(&[-0.1])));

    let me = OuterFunction::MaxEig { order: 2 };
    let sd = me.subdiff(&sv(&[&[2.0, 0.0], &[0.0, 1.0]])).unwrap();
    let u = sd.unique_element().unwrap();
    assert!((u - sv(&[&[1.0, 0.0], &[0.0, 0.0]])).norm() < 1e-12);

    assert_eq!(halfline().subdiff(&v(&[1.0])).unwrap_err(), Error::PointNotInDomain);
}

#[test]
fn subderivatives() {
    assert_eq!(OuterFunction::abs().subderivative(&v(&[0.0]), &v(&[-2.0])).unwrap(), ExtReal::Finite(2.0));
    assert_eq!(halfline().subderivative(&v(&[0.0]), &v(&[1.0])).unwrap(), ExtReal::PlusInf);
    let me = OuterFunction::MaxEig { order: 2 };
    let d = me
        .subderivative(&sv(&[&[2.0, 0.0], &[0.0, 1.0]]), &sv(&[&[3.0, 0.0], &[0.0, 9.0]]))
        .unwrap();
    assert!((d.finite().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn second_subderivatives() {
    let abs = OuterFunction::abs();
    assert_eq!(abs.second_subderivative(&v(&[0.0]), &v(&[1.0]), &v(&[3.0])).unwrap(), ExtReal::Finite(0.0));
    assert_eq!(abs.second_subderivative(&v(&[0.0]), &v(&[1.0]), &v(&[-3.0])).unwrap(), ExtReal::PlusInf);
    assert_eq!(
        abs.second_subderivative(&v(&[0.0]), &v(&[2.0]), &v(&[1.0])).unwrap_err(),
        Error::NotASubgradient
    );

    let w = sv(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let nsd = OuterFunction::IndNegSemidef { order: 2 };
    let a = sv(&[&[0.0, 0.0], &[0.0, -1.0]]);
    let y = sv(&[&[1.0, 0.0], &[0.0, 0.0]]);
    let d = nsd.second_subderivative(&a, &y, &w).unwrap().finite().unwrap();
    assert!((d - 2.0).abs() < 1e-12);

    let me = OuterFunction::MaxEig { order: 2 };
    let a = sv(&[&[2.0, 0.0], &[0.0, 1.0]]);
    let d = me.second_subderivative(&a, &y, &w).unwrap().finite().unwrap();
    assert!((d - 2.0).abs() < 1e-12);
    // Off the critical cone the top-eigenvalue quadratic term is irrelevant.
    let off = sv(&[&[0.0, 0.0], &[0.0, 0.0]]);
    assert_eq!(me.second_subderivative(&a, &y, &off).unwrap(), ExtReal::Finite(0.0));
}

#[test]
fn parabolic_subderivatives() {
    let z = v(&[0.0]);
    let h = halfline();
    assert_eq!(h.parabolic_subderivative(&z, &v(&[0.0]), &v(&[-1.0])).unwrap().0, ExtReal::Finite(0.0));
    assert_eq!(h.parabolic_subderivative(&z, &v(&[0.0]), &v(&[1.0])).unwrap().0, ExtReal::PlusInf);
    let (p, prov) = OuterFunction::abs().parabolic_subderivative(&z, &v(&[1.0]), &v(&[-0.7])).unwrap();
    assert_eq!((p, prov), (ExtReal::Finite(-0.7), Provenance::ClosedForm));
    let ts = TwiceSemidiff::new(Polynomial::zero(1), Polynomial::parse("x1^2", 1).unwrap(), v(&[0.0])).unwrap();
    let (p, _) = OuterFunction::TwiceSemidiff(ts).parabolic_subderivative(&z, &v(&[1.0]), &v(&[5.0])).unwrap();
    assert_eq!(p, ExtReal::Finite(1.0));
    assert_eq!(
        h.parabolic_subderivative(&z, &v(&[1.0]), &v(&[0.0])).unwrap_err(),
        Error::SubderivativeNotFinite
    );
}

#[test]
fn second_order_tangents() {
    let z = v(&[0.0]);
    let h = halfline();
    assert!(h.second_order_tangent(&z, &v(&[0.0]), &v(&[-1.0])).unwrap().0);
    assert!(h.second_order_tangent(&z, &v(&[-1.0]), &v(&[10.0])).unwrap().0);
    assert!(!h.second_order_tangent(&z, &v(&[0.0]), &v(&[1.0])).unwrap().0);

    // A = diag(0,−1), W = e1e2ᵀ + e2e1ᵀ: the 2×2 determinant of A + tW + ½t²U
    // stays nonnegative for small t exactly when U₁₁ ≤ −2.
    let nsd = OuterFunction::IndNegSemidef { order: 2 };
    let a = sv(&[&[0.0, 0.0], &[0.0, -1.0]]);
    let w = sv(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let (inside, prov) = nsd.second_order_tangent(&a, &w, &sv(&[&[-3.0, 0.0], &[0.0, 0.0]])).unwrap();
    assert!(inside);
    assert_eq!(prov, Provenance::Numeric);
    assert!(!nsd.second_order_tangent(&a, &w, &sv(&[&[-1.0, 0.0], &[0.0, 0.0]])).unwrap().0);
}

#[test]
fn critical_cones() {
    let k = OuterFunction::abs().critical_cone(&v(&[0.0]), &v(&[1.0])).unwrap();
    assert!(k.contains(&v(&[2.0])));
    assert!(!k.contains(&v(&[-2.0])));
    let k = halfline().critical_cone(&v(&[0.0]), &v(&[0.0])).unwrap();
    assert!(k.contains(&v(&[-1.0])) && !k.contains(&v(&[1.0])));
    let k = halfline().critical_cone(&v(&[0.0]), &v(&[2.0])).unwrap();
    assert!(k.as_cone().unwrap().is_trivial().unwrap());

    let nsd = OuterFunction::IndNegSemidef { order: 2 };
    let a = sv(&[&[0.0, 0.0], &[0.0, -1.0]]);
    let y = sv(&[&[1.0, 0.0], &[0.0, 0.0]]);
    let k = nsd.critical_cone(&a, &y).unwrap();
    assert!(k.contains(&sv(&[&[0.0, 1.0], &[1.0, 5.0]])));
    assert!(!k.contains(&sv(&[&[-1.0, 0.0], &[0.0, 0.0]])));
    let p = k.project(&sv(&[&[-1.0, 0.0], &[0.0, 3.0]])).unwrap();
    assert!((p - sv(&[&[0.0, 0.0], &[0.0, 3.0]])).norm() < 1e-9);
}

#[test]
fn semidefinite_projection() {
    let nsd = OuterFunction::IndNegSemidef { order: 2 };
    let z = sv(&[&[1.0, 0.0], &[0.0, -2.0]]);
    assert!((nsd.project_domain(&z).unwrap() - sv(&[&[0.0, 0.0], &[0.0, -2.0]])).norm() < 1e-12);
    assert!((nsd.domain_distance(&z).unwrap() - 1.0).abs() < 1e-12);
    assert!(nsd.domain_normal_cone(&z).is_err());
}

#[test]
fn sum_of_top_eigenvalues() {
    // σ₂ on diag(3,2,1) is smooth with gradient diag(1,1,0); the second
    // subderivative along W comes from the gap between λ₂ and λ₃.
    let g = OuterFunction::SumTopEig { order: 3, count: 2 };
    let a = svec(&SymMatrix::diag(&[3.0, 2.0, 1.0]));
    let y = svec(&SymMatrix::diag(&[1.0, 1.0, 0.0]));
    let mut wm = DMatrix::zeros(3, 3);
    wm[(1, 2)] = 1.0;
    wm[(2, 1)] = 1.0;
    let w = svec(&SymMatrix::new(wm).unwrap());
    let d = g.second_subderivative(&a, &y, &w).unwrap().finite().unwrap();
    // Direct quotient: σ₂ is smooth here, so one small step suffices.
    let f = g.as_sampled();
    let t = 1e-3;
    let quot = (f.eval(&(&a + &w * t)).unwrap().finite().unwrap() - 5.0) / (0.5 * t * t);
    assert!((d - quot).abs() < 1e-3, "{d} vs {quot}");
}
