//! Second-order optimality for `ψ = φ + g∘F`: Lagrangian Hessians, the
//! necessary and sufficient conditions over the critical cone, sampled
//! quadratic-growth checks and the strong-metric-subregularity certificate.
//!
//! All routines work at `v = −∇φ(x)`, so `x` must be stationary:
//! `0 ∈ ∇φ(x) + ∇F(x)ᵀ ∂g(F(x))`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::catalog::{CriticalConeRepr, OuterFunction};
use crate::composite::{dual_value, restore_feasible, ChainContext, ChainSettings};
use crate::error::{Error, Result};
use crate::model::{CompositeProblem, ExtReal};
use crate::numkit::SymMatrix;

/// `‖∇F(x)ᵀ y + ∇φ(x)‖` bound for stationarity.
pub const STATIONARITY_TOL: f64 = 1e-8;
/// The necessary condition tolerates values down to `−SONC_TOL`.
pub const SONC_TOL: f64 = 1e-6;
/// The sufficient condition needs a minimum above `SSOSC_TOL`.
pub const SSOSC_TOL: f64 = 1e-6;
/// Slack in the growth inequality.
pub const GROWTH_SLACK: f64 = 1e-9;
/// Sphere points per requested direction in the sufficient-condition search.
pub const SPHERE_FACTOR: usize = 64;
/// Radii tried, in order, by [`growth_scan`].
pub const GROWTH_EPSILONS: [f64; 3] = [0.1, 0.05, 0.01];

const REFINE_START: f64 = 0.25;
const REFINE_FLOOR: f64 = 1e-6;
const REFINE_SEEDS: usize = 3;
const REFINE_BUDGET: usize = 20_000;
const SAMPLE_ATTEMPTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    Necessary,
    Sufficient,
}

/// How the critical directions were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    /// Normalized generators of a polyhedral cone of dimension at most one.
    ExtremeRays,
    /// Sphere points pushed into the cone, then refined.
    SphereGrid,
}

impl SearchMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SearchMethod::ExtremeRays => "extreme-rays",
            SearchMethod::SphereGrid => "sphere-grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SOCReport {
    pub kind: ConditionKind,
    pub holds: bool,
    pub worst_direction: DVector<f64>,
    pub worst_value: ExtReal,
    pub directions_tested: usize,
    pub method: SearchMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// The modulus tested.
    pub ell: f64,
    /// Largest modulus consistent with every sample: `min 2(ψ(x′) − ψ(x))/‖x′ − x‖²`.
    pub ell_found: f64,
    pub epsilon: f64,
    pub samples: usize,
    pub violations: usize,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.samples > 0
    }
}

/// One standing assumption and how it is backed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assumption {
    pub name: &'static str,
    pub status: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmsCertificate {
    pub ssosc: SOCReport,
    /// True when the sufficient condition holds, so that strong metric
    /// subregularity of `∂ψ` at `(x, 0)` follows.
    pub affirmative: bool,
    pub equivalence_note: String,
    pub assumptions: Vec<Assumption>,
}

/// `∇²φ(x) + Σ_j y_j ∇²F_j(x)`.
pub fn lagrangian_hessian(prob: &CompositeProblem, x: &DVector<f64>, y: &DVector<f64>) -> Result<SymMatrix> {
    if y.len() != prob.map.n_out() {
        return Err(Error::DimensionMismatch { expected: prob.map.n_out(), got: y.len() });
    }
    let mut h = prob.phi.hessian(x)?;
    for (yj, hj) in y.iter().zip(prob.map.hessians(x)?) {
        h = h.add(&hj.scale(*yj));
    }
    Ok(h)
}

/// The chain-rule data at a stationary point, reused across the checks.
pub struct Stationary<'a> {
    pub ctx: ChainContext<'a>,
    pub cone: CriticalConeRepr,
    phi_hessian: SymMatrix,
}

impl<'a> Stationary<'a> {
    /// Builds the context at `v = −∇φ(x)`; `NotStationary` when no multiplier
    /// satisfies `∇F(x)ᵀ y = v` within [`STATIONARITY_TOL`].
    pub fn new(prob: &'a CompositeProblem, x: &DVector<f64>, settings: &ChainSettings) -> Result<Self> {
        let v = prob.default_v(x)?;
        let ctx = match ChainContext::new(prob, x, &v, settings) {
            Ok(c) => c,
            Err(Error::EmptyMultiplierSet) => return Err(Error::NotStationary),
            Err(e) => return Err(e),
        };
        let jt = ctx.jac.transpose();
        let ok = ctx
            .multipliers
            .elements
            .iter()
            .any(|y| (&jt * y - &v).norm() <= STATIONARITY_TOL * (1.0 + v.norm()));
        if !ok {
            return Err(Error::NotStationary);
        }
        let cone = ctx.critical_cone()?;
        let phi_hessian = prob.phi.hessian(x)?;
        Ok(Stationary { ctx, cone, phi_hessian })
    }

    /// `⟨∇²φ(x) w, w⟩ + d²f(x, v)(w)`; `+∞` off the critical cone.
    pub fn value(&self, w: &DVector<f64>) -> Result<ExtReal> {
        if !self.cone.contains(w) {
            return Ok(ExtReal::PlusInf);
        }
        match dual_value(&self.ctx, w) {
            Ok((d, _)) => Ok(d + self.phi_hessian.quad(w)),
            // No active piece admits w: numerically off the cone.
            Err(Error::EmptyMultiplierSet) => Ok(ExtReal::PlusInf),
            Err(e) => Err(e),
        }
    }

    /// Unit vector in the cone nearest to the ray through `w`, if any.
    fn into_cone(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        let p = match self.cone.project(w) {
            Some(p) => p,
            None => w.clone(),
        };
        let n = p.norm();
        if n < 1e-9 {
            return None;
        }
        let p = p / n;
        self.cone.contains(&p).then_some(p)
    }

    /// Generator directions when the cone is polyhedral.
    fn generator_directions(&self) -> Result<Option<(Vec<DVector<f64>>, usize)>> {
        match self.cone.as_cone() {
            Some(c) => {
                let g = c.generators()?;
                let dim = g.span_dim(c.dim());
                Ok(Some((g.directions(), dim)))
            }
            None => Ok(None),
        }
    }

    fn random_directions(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let n = self.ctx.prob.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count * SAMPLE_ATTEMPTS {
            if out.len() == count {
                break;
            }
            let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Some(d) = self.into_cone(&g) {
                out.push(d);
            }
        }
        out
    }
}

struct Worst {
    dir: DVector<f64>,
    value: ExtReal,
    tested: usize,
}

fn scan(st: &Stationary<'_>, dirs: &[DVector<f64>]) -> Result<Worst> {
    let mut worst = Worst { dir: DVector::zeros(st.ctx.prob.n()), value: ExtReal::PlusInf, tested: 0 };
    for d in dirs {
        let val = st.value(d)?;
        worst.tested += 1;
        if worst.tested == 1 || val < worst.value {
            worst.value = val;
            worst.dir = d.clone();
        }
    }
    Ok(worst)
}

fn settings(seed: u64) -> ChainSettings {
    ChainSettings { seed, ..ChainSettings::default() }
}

/// Necessary condition: the value is `≥ −1e-6` on generator directions of a
/// polyhedral critical cone plus `n_dirs` random unit critical directions.
/// A pass is consistent with local minimality; it does not prove it.
pub fn check_sonc(prob: &CompositeProblem, x: &DVector<f64>, n_dirs: usize, seed: u64) -> Result<SOCReport> {
    let st = Stationary::new(prob, x, &settings(seed))?;
    sonc_at(&st, n_dirs, seed)
}

pub fn sonc_at(st: &Stationary<'_>, n_dirs: usize, seed: u64) -> Result<SOCReport> {
    let mut dirs = match st.generator_directions()? {
        Some((g, _)) => g,
        None => Vec::new(),
    };
    dirs.extend(st.random_directions(n_dirs, seed));
    let w = scan(st, &dirs)?;
    let holds = match w.value {
        ExtReal::PlusInf => true,
        ExtReal::Finite(a) => a >= -SONC_TOL,
    };
    Ok(SOCReport {
        kind: ConditionKind::Necessary,
        holds,
        worst_direction: w.dir,
        worst_value: w.value,
        directions_tested: w.tested,
        method: SearchMethod::SphereGrid,
    })
}

/// Sufficient condition: the minimum of the value over unit critical
/// directions is `> 1e-6`. Exact over the rays of a polyhedral cone of
/// dimension at most one; otherwise a sphere search with local refinement.
/// The cone `{0}` satisfies the condition vacuously with value `+∞`.
pub fn check_ssosc(prob: &CompositeProblem, x: &DVector<f64>, n_dirs: usize, seed: u64) -> Result<SOCReport> {
    let st = Stationary::new(prob, x, &settings(seed))?;
    ssosc_at(&st, n_dirs, seed)
}

pub fn ssosc_at(st: &Stationary<'_>, n_dirs: usize, seed: u64) -> Result<SOCReport> {
    let n = st.ctx.prob.n();
    let gens = st.generator_directions()?;
    let (w, method) = match &gens {
        Some((dirs, dim)) if *dim <= 1 => (scan(st, dirs)?, SearchMethod::ExtremeRays),
        _ => {
            let mut dirs: Vec<DVector<f64>> = gens.map(|g| g.0).unwrap_or_default();
            for p in sphere_points(n, SPHERE_FACTOR * n_dirs.max(1), seed) {
                if let Some(d) = st.into_cone(&p) {
                    dirs.push(d);
                }
            }
            (refine(st, &dirs)?, SearchMethod::SphereGrid)
        }
    };
    let holds = match w.value {
        ExtReal::PlusInf => true,
        ExtReal::Finite(a) => a > SSOSC_TOL,
    };
    Ok(SOCReport {
        kind: ConditionKind::Sufficient,
        holds,
        worst_direction: w.dir,
        worst_value: w.value,
        directions_tested: w.tested,
        method,
    })
}

/// Evaluates all starts, then runs coordinate descent on the sphere from the
/// best few, halving the step from `0.25` down to `1e-6`.
fn refine(st: &Stationary<'_>, starts: &[DVector<f64>]) -> Result<Worst> {
    let n = st.ctx.prob.n();
    let mut scored = Vec::with_capacity(starts.len());
    for d in starts {
        scored.push((st.value(d)?, d.clone()));
    }
    let mut tested = scored.len();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = match scored.first() {
        Some((v, d)) => (*v, d.clone()),
        None => return Ok(Worst { dir: DVector::zeros(n), value: ExtReal::PlusInf, tested: 0 }),
    };
    for (v0, d0) in scored.into_iter().take(REFINE_SEEDS) {
        if v0.is_inf() {
            break;
        }
        let (mut cur_v, mut cur) = (v0, d0);
        let mut h = REFINE_START;
        let mut evals = 0;
        while h >= REFINE_FLOOR && evals < REFINE_BUDGET {
            let mut improved = false;
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut c = cur.clone();
                    c[i] += s * h;
                    let Some(c) = st.into_cone(&c) else { continue };
                    evals += 1;
                    let val = st.value(&c)?;
                    if val < cur_v {
                        cur_v = val;
                        cur = c;
                        improved = true;
                    }
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        tested += evals;
        if cur_v < best.0 {
            best = (cur_v, cur);
        }
    }
    Ok(Worst { dir: best.1, value: best.0, tested })
}

/// Deterministic points on the unit sphere of `R^n`: both signs for `n = 1`,
/// equally spaced angles for `n = 2`, a Fibonacci spiral for `n = 3`, and
/// seeded Gaussian directions beyond.
pub fn sphere_points(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let zc = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - zc * zc).sqrt();
                    let a = golden * k as f64;
                    DVector::from_vec(vec![r * a.cos(), r * a.sin(), zc])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let nn = g.norm();
                    g / nn
                })
                .collect()
        }
    }
}

/// Counts feasible `x′ ∈ B_ε(x)` with `ψ(x′) < ψ(x) + (ℓ/2)‖x′ − x‖² − 1e-9`.
/// Half of the samples are uniform in the ball (rejecting infeasible draws),
/// half are restored onto `dom f`, which lands them on the constraint
/// boundary when the draw was infeasible.
pub fn verify_growth(
    prob: &CompositeProblem,
    x: &DVector<f64>,
    ell: f64,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    if !(ell > 0.0 && epsilon > 0.0) {
        return Err(Error::InvalidInput("ell and epsilon must be positive".into()));
    }
    let base = prob.value(x)?.finite().ok_or(Error::BasePointInfeasible)?;
    let n = prob.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = epsilon * rng.gen::<f64>().powf(1.0 / n as f64);
        x + g.normalize() * r
    };
    let mut report = GrowthReport { ell, ell_found: f64::INFINITY, epsilon, samples: 0, violations: 0 };
    let record = |p: &DVector<f64>, val: f64, report: &mut GrowthReport| {
        let d2 = (p - x).norm_squared();
        if d2 == 0.0 {
            return;
        }
        report.samples += 1;
        let gap = val - base;
        if gap < 0.5 * ell * d2 - GROWTH_SLACK {
            report.violations += 1;
        }
        report.ell_found = report.ell_found.min(2.0 * gap / d2);
    };
    let interior = n_samples / 2;
    for k in 0..n_samples {
        let boundary = k >= interior;
        for _ in 0..SAMPLE_ATTEMPTS {
            let mut p = draw(&mut rng);
            if boundary {
                match restore_feasible(prob, &p) {
                    Some(q) if (&q - x).norm() <= epsilon => p = q,
                    _ => continue,
                }
            }
            if let ExtReal::Finite(val) = prob.value(&p)? {
                record(&p, val, &mut report);
                break;
            }
        }
    }
    Ok(report)
}

/// Tries `ε` in `0.1, 0.05, 0.01` and returns the first passing report, or
/// the last one when none passes.
pub fn growth_scan(prob: &CompositeProblem, x: &DVector<f64>, ell: f64, n_samples: usize, seed: u64) -> Result<GrowthReport> {
    let mut last = None;
    for eps in GROWTH_EPSILONS {
        let r = verify_growth(prob, x, ell, eps, n_samples, seed)?;
        if r.passed() {
            return Ok(r);
        }
        last = Some(r);
    }
    Ok(last.expect("nonempty scan"))
}

/// Runs the sufficient condition and states what it implies: under the
/// standing assumptions, SSOSC holds exactly when `x` is a local minimizer at
/// which `∂ψ` is strongly metrically subregular at `(x, 0)`.
pub fn sms_certificate(prob: &CompositeProblem, x: &DVector<f64>) -> Result<SmsCertificate> {
    sms_certificate_with(prob, x, 8, ChainSettings::default().seed)
}

pub fn sms_certificate_with(prob: &CompositeProblem, x: &DVector<f64>, n_dirs: usize, seed: u64) -> Result<SmsCertificate> {
    let st = Stationary::new(prob, x, &settings(seed))?;
    let ssosc = ssosc_at(&st, n_dirs, seed)?;
    let affirmative = ssosc.holds;
    let equivalence_note = if affirmative {
        "the second-order sufficient condition holds; under the standing assumptions this is \
         equivalent to x being a local minimizer with the subgradient mapping of psi strongly \
         metrically subregular at (x, 0)"
    } else {
        "the second-order sufficient condition fails; no strong metric subregularity claim is made"
    }
    .to_string();
    Ok(SmsCertificate { ssosc, affirmative, equivalence_note, assumptions: assumptions(&st) })
}

fn assumptions(st: &Stationary<'_>) -> Vec<Assumption> {
    let g = &st.ctx.prob.outer;
    let regularity = match g {
        OuterFunction::Plq(_) | OuterFunction::IndPolyhedron(_) | OuterFunction::TwiceSemidiff(_) => {
            "closed-form catalog property"
        }
        _ => "catalog property, parabolic values numeric",
    };
    vec![
        Assumption { name: "outer function convex and lower semicontinuous", status: "by catalog construction" },
        Assumption { name: "outer function locally Lipschitz relative to its domain", status: "by catalog construction" },
        Assumption { name: "metric subregularity constraint qualification", status: st.ctx.mscq_provenance.as_str() },
        Assumption { name: "outer function parabolically regular", status: regularity },
    ]
}
