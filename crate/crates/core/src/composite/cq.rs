use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::catalog::{OuterFunction, Spectrum};
use crate::error::{Error, Result};
use crate::model::CompositeProblem;
use crate::numkit::{nullspace, smat, solve_least_squares, svec, svec_dim, sym_eig, SymMatrix};

const RESTORE_ITERS: usize = 100;
const MAX_RESTORES: usize = 2000;
const DENOM_FLOOR: f64 = 1e-12;

/// Empirical evidence for `d(x, dom f) ≤ κ d(F(x), dom g)` near the base point.
#[derive(Debug, Clone, PartialEq)]
pub struct MscqResult {
    pub holds_evidence: bool,
    /// Largest observed ratio over all radii.
    pub kappa_hat: f64,
    pub worst_point: DVector<f64>,
    /// Number of ratios with a denominator above `1e-12`.
    pub samples: usize,
    /// Largest ratio at `radius`, `radius/2`, `radius/4`.
    pub per_radius: [f64; 3],
}

/// Gauss–Newton restoration `y ← y − ∇F(y)⁺ (F(y) − P(F(y)))` onto `dom f`.
/// Returns `None` when the iteration stalls outside the domain.
pub fn restore_feasible(prob: &CompositeProblem, x: &DVector<f64>) -> Option<DVector<f64>> {
    let mut y = x.clone();
    for _ in 0..RESTORE_ITERS {
        let fz = prob.map.eval(&y).ok()?;
        if prob.outer.eval(&fz).ok()?.is_finite() {
            return Some(y);
        }
        let r = &fz - prob.outer.project_domain(&fz).ok()?;
        let j = prob.map.jacobian(&y).ok()?;
        let (step, _) = solve_least_squares(&j, &r).ok()?;
        if step.norm() <= 1e-300 || !step.iter().all(|s| s.is_finite()) {
            return None;
        }
        y -= step;
    }
    None
}

/// Upper estimate of `d(p, dom f)` by restoration plus pattern search,
/// starting from the feasible point `base`.
fn distance_to_domain(prob: &CompositeProblem, p: &DVector<f64>, base: &DVector<f64>) -> f64 {
    let mut best_pt = base.clone();
    let mut best = (p - base).norm();
    if let Some(y) = restore_feasible(prob, p) {
        let d = (&y - p).norm();
        if d < best {
            best = d;
            best_pt = y;
        }
    }
    let n = p.len();
    let mut step = 0.5 * best;
    let floor = 1e-9 * (1.0 + best);
    let mut restores = 0;
    while step > floor && restores < MAX_RESTORES {
        let mut improved = false;
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut c = best_pt.clone();
                c[i] += s * step;
                restores += 1;
                if let Some(y) = restore_feasible(prob, &c) {
                    let d = (&y - p).norm();
                    if d < best {
                        best = d;
                        best_pt = y;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

/// Samples the ratio `d(x′, dom f) / d(F(x′), dom g)` on the balls of radius
/// `r`, `r/2` and `r/4` (the same seeded offsets, rescaled). Evidence holds
/// when the finer radii do not exceed `1.5` times the coarse maximum.
pub fn check_mscq(prob: &CompositeProblem, x: &DVector<f64>, n_samples: usize, radius: f64, seed: u64) -> Result<MscqResult> {
    prob.require_feasible(x)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    let n = prob.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<DVector<f64>> = (0..n_samples)
        .filter_map(|_| {
            let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let gn = g.norm();
            let r = rng.gen::<f64>().powf(1.0 / n as f64);
            (gn > 0.0).then(|| g * (r / gn))
        })
        .collect();
    let mut per_radius = [0.0; 3];
    let mut kappa_hat = 0.0;
    let mut worst_point = x.clone();
    let mut samples = 0;
    for (k, scale) in [1.0, 0.5, 0.25].iter().enumerate() {
        for off in &offsets {
            let p = x + off * (radius * scale);
            let fp = prob.map.eval(&p)?;
            let den = prob.outer.domain_distance(&fp)?;
            if den <= DENOM_FLOOR {
                continue;
            }
            samples += 1;
            let ratio = distance_to_domain(prob, &p, x) / den;
            if ratio > per_radius[k] {
                per_radius[k] = ratio;
            }
            if ratio > kappa_hat {
                kappa_hat = ratio;
                worst_point = p;
            }
        }
    }
    let holds_evidence = per_radius[1].max(per_radius[2]) <= 1.5 * per_radius[0] + 1e-6;
    Ok(MscqResult { holds_evidence, kappa_hat, worst_point, samples, per_radius })
}

/// `N_{dom g}(F(x)) ∩ ker ∇F(x)ᵀ = {0}`.
pub fn check_basic_cq(prob: &CompositeProblem, x: &DVector<f64>) -> Result<bool> {
    let z = prob.require_feasible(x)?;
    if prob.outer.has_full_domain() {
        return Ok(true);
    }
    let j = prob.map.jacobian(x)?;
    match &prob.outer {
        OuterFunction::IndNegSemidef { .. } => negsemidef_basic_cq(&z, &j),
        _ => {
            let n = prob.outer.domain_normal_cone(&z)?;
            let k = n.intersect(&crate::numkit::PolyCone::new(n.dim(), DMatrix::zeros(0, n.dim()), j.transpose())?)?;
            Ok(k.is_trivial()?)
        }
    }
}

/// Searches `Θ ⪰ 0, tr Θ = 1` with `∇F(x)ᵀ svec(E Θ Eᵀ) = 0` by alternating
/// projections; the CQ fails when such a `Θ` exists.
fn negsemidef_basic_cq(z: &DVector<f64>, j: &DMatrix<f64>) -> Result<bool> {
    let s = Spectrum::new(z)?;
    let k = s.kernel();
    if k.is_empty() {
        return Ok(true);
    }
    let e = s.eig.basis(k);
    let r = e.ncols();
    let pd = svec_dim(r);
    let mut m = DMatrix::zeros(j.ncols(), pd);
    let mut tr = DVector::zeros(pd);
    for c in 0..pd {
        let mut ek = DVector::zeros(pd);
        ek[c] = 1.0;
        let t = smat(&ek)?;
        tr[c] = t.matrix().trace();
        let y = svec(&SymMatrix::symmetrize(&(&e * t.matrix() * e.transpose())));
        m.set_column(c, &(j.transpose() * y));
    }
    let nb = nullspace(&m);
    if nb.ncols() == 0 {
        return Ok(true);
    }
    let a = nb.transpose() * &tr;
    if a.norm() < 1e-12 {
        return Ok(true);
    }
    let proj_affine = |theta: &DVector<f64>| {
        let mut c = nb.transpose() * theta;
        c += &a * ((1.0 - a.dot(&c)) / a.norm_squared());
        &nb * c
    };
    let proj_psd = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let t = smat(theta)?;
        let ev = sym_eig(&t);
        let d = DVector::from_iterator(ev.values.len(), ev.values.iter().map(|&l| l.max(0.0)));
        Ok(svec(&SymMatrix::symmetrize(&(&ev.vectors * DMatrix::from_diagonal(&d) * ev.vectors.transpose()))))
    };
    let mut theta = proj_affine(&(&tr / r as f64));
    for _ in 0..10_000 {
        let p = proj_psd(&theta)?;
        let q = proj_affine(&p);
        if (&q - &p).norm() <= 1e-9 {
            return Ok(false);
        }
        theta = q;
    }
    Ok(true)
}
