//! Difference-quotient estimates of subderivatives, second subderivatives and
//! parabolic subderivatives.
//!
//! Each estimate minimizes a quotient over the ball `‖u − u₀‖ ≤ radius(t)` at
//! every level of a [`GridSchedule`] and reports the minimum over the three
//! finest levels. The search is a grid (or seeded random cloud when the
//! dimension exceeds 4) followed by pattern-search refinement of the three best
//! candidates.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{ExtReal, GridSchedule, NEG_GUARD};

pub type Evaluator = Arc<dyn Fn(&DVector<f64>) -> ExtReal + Send + Sync>;
pub type Projector = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Grid dimension above which the search switches to random ball samples.
pub const MAX_GRID_DIM: usize = 4;
pub const RANDOM_SAMPLES: usize = 2000;
/// Agreement tolerance `max(ABS_TOL, REL_TOL·|value|)` between oracle and formula.
pub const ABS_TOL: f64 = 0.05;
pub const REL_TOL: f64 = 0.05;

const SEARCH_SEED: u64 = 0x0d1f_f00d;
const MAX_REFINE_EVALS: usize = 4_000;

/// `f: R^dim → (−∞, +∞]` given by a closure.
///
/// An optional projector onto `dom f` lets the search slide along the
/// boundary of the domain: an infeasible probe is replaced by the probe whose
/// point is the projection, provided it stays inside the search ball.
#[derive(Clone)]
pub struct SampledFunction {
    dim: usize,
    description: String,
    evaluator: Evaluator,
    projector: Option<Projector>,
}

impl fmt::Debug for SampledFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledFunction")
            .field("dim", &self.dim)
            .field("description", &self.description)
            .field("projector", &self.projector.is_some())
            .finish()
    }
}

impl SampledFunction {
    pub fn new(dim: usize, description: impl Into<String>, evaluator: Evaluator) -> Self {
        SampledFunction { dim, description: description.into(), evaluator, projector: None }
    }

    pub fn from_fn<F>(dim: usize, description: impl Into<String>, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> ExtReal + Send + Sync + 'static,
    {
        Self::new(dim, description, Arc::new(f))
    }

    pub fn with_projector(mut self, projector: Projector) -> Self {
        self.projector = Some(projector);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<ExtReal> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let v = (self.evaluator)(x);
        match v {
            ExtReal::Finite(a) if a.is_nan() => Err(Error::InvalidInput("evaluator returned NaN".into())),
            ExtReal::Finite(a) if a < NEG_GUARD => Err(Error::NegativeInfinityDetected),
            _ => Ok(v),
        }
    }

    fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.projector.as_ref().map(|p| p(x))
    }

    fn finite_at(&self, x: &DVector<f64>) -> Result<f64> {
        self.eval(x)?.finite().ok_or(Error::BasePointInfeasible)
    }
}

/// Best probe found at one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBest {
    pub t: f64,
    pub arg: DVector<f64>,
    pub value: ExtReal,
}

/// A stabilized estimate together with the per-level minimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: ExtReal,
    pub levels: Vec<LevelBest>,
}

#[derive(Clone, Copy)]
enum Kind<'a> {
    /// `[f(x + t u) − f(x)] / t`.
    First,
    /// `[f(x + t u) − f(x) − t⟨v, u⟩] / (½t²)`.
    Second { v: &'a DVector<f64> },
    /// `[f(x + t w + ½t² u) − f(x) − t·dfw] / (½t²)`.
    Parabolic { w: &'a DVector<f64>, dfw: f64 },
}

struct Quotient<'a> {
    f: &'a SampledFunction,
    x: &'a DVector<f64>,
    fx: f64,
    kind: Kind<'a>,
}

impl<'a> Quotient<'a> {
    /// The probe point is `base + scale·u`.
    fn frame(&self, t: f64) -> (DVector<f64>, f64) {
        match self.kind {
            Kind::First | Kind::Second { .. } => (self.x.clone(), t),
            Kind::Parabolic { w, .. } => (self.x + w * t, 0.5 * t * t),
        }
    }

    fn value_at(&self, t: f64, base: &DVector<f64>, scale: f64, u: &DVector<f64>) -> Result<ExtReal> {
        let p = base + u * scale;
        let fp = match self.f.eval(&p)? {
            ExtReal::PlusInf => return Ok(ExtReal::PlusInf),
            ExtReal::Finite(a) => a,
        };
        let q = match self.kind {
            Kind::First => (fp - self.fx) / t,
            Kind::Second { v } => (fp - self.fx - t * v.dot(u)) / (0.5 * t * t),
            Kind::Parabolic { dfw, .. } => (fp - self.fx - t * dfw) / (0.5 * t * t),
        };
        ExtReal::from_f64(q)
    }

    /// Evaluates `u`; when infeasible, retries at the projected probe if that
    /// stays within the ball.
    fn probe(
        &self,
        t: f64,
        frame: &(DVector<f64>, f64),
        center: &DVector<f64>,
        radius: f64,
        u: DVector<f64>,
    ) -> Result<(DVector<f64>, ExtReal)> {
        let (base, scale) = frame;
        let val = self.value_at(t, base, *scale, &u)?;
        if val.is_finite() {
            return Ok((u, val));
        }
        if let Some(p) = self.f.project(&(base + &u * *scale)) {
            let up = (p - base) / *scale;
            if (&up - center).norm() <= radius * (1.0 + 1e-9) + 1e-300 {
                let vp = self.value_at(t, base, *scale, &up)?;
                if vp.is_finite() {
                    return Ok((up, vp));
                }
            }
        }
        Ok((u, val))
    }

    fn candidates(&self, center: &DVector<f64>, radius: f64, sched: &GridSchedule, level: usize) -> Vec<DVector<f64>> {
        let d = center.len();
        let mut out = vec![center.clone()];
        if radius == 0.0 || d == 0 {
            return out;
        }
        if d <= MAX_GRID_DIM {
            let s = sched.samples_per_axis;
            if s < 2 {
                return out;
            }
            let axis: Vec<f64> = (0..s).map(|i| -radius + 2.0 * radius * i as f64 / (s - 1) as f64).collect();
            let total = s.pow(d as u32);
            for mut idx in 0..total {
                let mut off = DVector::zeros(d);
                for k in 0..d {
                    off[k] = axis[idx % s];
                    idx /= s;
                }
                if off.norm() <= radius * (1.0 + 1e-12) {
                    out.push(center + off);
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED ^ (level as u64).wrapping_mul(0x9e37_79b9));
            for _ in 0..RANDOM_SAMPLES {
                let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = g.norm();
                if n == 0.0 {
                    continue;
                }
                let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
                out.push(center + g * (r / n));
            }
        }
        out
    }

    fn refine(
        &self,
        t: f64,
        frame: &(DVector<f64>, f64),
        center: &DVector<f64>,
        radius: f64,
        mut u: DVector<f64>,
        mut best: ExtReal,
    ) -> Result<(DVector<f64>, ExtReal)> {
        if radius == 0.0 || best.is_inf() {
            return Ok((u, best));
        }
        let d = u.len();
        let mut step = radius / 4.0;
        let floor = radius * 1e-6;
        let mut evals = 0;
        while step > floor && evals < MAX_REFINE_EVALS {
            let mut improved = false;
            for i in 0..d {
                for s in [1.0, -1.0] {
                    let mut c = u.clone();
                    c[i] += s * step;
                    let c = clamp_ball(c, center, radius);
                    let (cu, cv) = self.probe(t, frame, center, radius, c)?;
                    evals += 1;
                    if cv < best {
                        u = cu;
                        best = cv;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        Ok((u, best))
    }

    fn level(
        &self,
        t: f64,
        center: &DVector<f64>,
        sched: &GridSchedule,
        level: usize,
        warm: &[DVector<f64>],
        refine: bool,
    ) -> Result<LevelBest> {
        let radius = sched.radius(t);
        let frame = self.frame(t);
        let mut cands = self.candidates(center, radius, sched, level);
        cands.extend(warm.iter().map(|w| clamp_ball(w.clone(), center, radius)));
        let mut scored: Vec<(DVector<f64>, ExtReal)> = Vec::with_capacity(cands.len());
        for c in cands {
            scored.push(self.probe(t, &frame, center, radius, c)?);
        }
        // Stable sort keeps generation order among ties.
        scored.sort_by(|a, b| a.1.cmp(&b.1));
        let mut best = scored[0].clone();
        if refine {
            for (u, v) in scored.into_iter().take(3) {
                if v.is_inf() {
                    break;
                }
                let r = self.refine(t, &frame, center, radius, u, v)?;
                if r.1 < best.1 {
                    best = r;
                }
            }
        }
        Ok(LevelBest { t, arg: best.0, value: best.1 })
    }

    fn run(&self, center: &DVector<f64>, sched: &GridSchedule, cheap: bool) -> Result<Vec<LevelBest>> {
        sched.validate()?;
        let levels = sched.levels();
        let start = if cheap { levels.len() - 3 } else { 0 };
        let mut out: Vec<LevelBest> = Vec::with_capacity(levels.len() - start);
        for (k, &t) in levels.iter().enumerate().skip(start) {
            let mut warm = Vec::new();
            if let Some(prev) = out.last() {
                if prev.value.is_finite() {
                    warm.push(prev.arg.clone());
                    let r_old = sched.radius(prev.t);
                    if r_old > 0.0 {
                        warm.push(center + (&prev.arg - center) * (sched.radius(t) / r_old));
                    }
                }
            }
            out.push(self.level(t, center, sched, k, &warm, !cheap)?);
        }
        Ok(out)
    }
}

fn clamp_ball(u: DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let off = &u - center;
    let n = off.norm();
    if n <= radius {
        u
    } else if radius == 0.0 {
        center.clone()
    } else {
        center + off * (radius / n)
    }
}

/// Reduces per-level minima to a single value.
///
/// `+∞` is reported when every probe was infeasible, when the finest three
/// levels are all infeasible or all exceed `10/t_finest`, or when they grow
/// like `1/t` (each `m_k·t_k ≥ 1e-3` and the finest at least twice the third
/// finest). Otherwise the minimum over the three finest levels.
pub fn stabilize(levels: &[LevelBest]) -> ExtReal {
    if levels.is_empty() {
        return ExtReal::PlusInf;
    }
    let fine = &levels[levels.len().saturating_sub(3)..];
    if fine.iter().all(|l| l.value.is_inf()) {
        return ExtReal::PlusInf;
    }
    let t_fin = fine.last().expect("nonempty").t;
    let finite: Vec<f64> = fine.iter().filter_map(|l| l.value.finite()).collect();
    if finite.iter().all(|&m| m > 10.0 / t_fin) {
        return ExtReal::PlusInf;
    }
    if finite.len() == fine.len() && fine.len() == 3 {
        let diverging = fine.iter().all(|l| l.value.to_f64() * l.t >= 1e-3)
            && fine[2].value.to_f64() >= 2.0 * fine[0].value.to_f64();
        if diverging {
            return ExtReal::PlusInf;
        }
    }
    ExtReal::min_of(fine.iter().map(|l| l.value))
}

/// `max(0.05, 5%·|formula|)` agreement, or both `+∞`.
pub fn within_tolerance(formula: &ExtReal, oracle: &ExtReal) -> bool {
    formula.agrees_rel(oracle, ABS_TOL, REL_TOL)
}

fn check_dir(f: &SampledFunction, u: &DVector<f64>) -> Result<()> {
    if u.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: u.len() });
    }
    Ok(())
}

/// `Δ²_t f(x, v)(w) = [f(x + tw) − f(x) − t⟨v, w⟩] / (½t²)`.
pub fn delta2_quotient(
    f: &SampledFunction,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
    w: &DVector<f64>,
) -> Result<ExtReal> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("step t must be positive".into()));
    }
    check_dir(f, v)?;
    check_dir(f, w)?;
    let q = Quotient { f, x, fx: f.finite_at(x)?, kind: Kind::Second { v } };
    q.value_at(t, x, t, w)
}

/// `d f(x)(w)` from first-order quotients, with a linear extrapolation
/// `(m_fine − ratio·m_prev)/(1 − ratio)` over the two finest levels to remove
/// the `O(t)` bias of the search ball.
pub fn estimate_subderivative(
    f: &SampledFunction,
    x: &DVector<f64>,
    w: &DVector<f64>,
    sched: &GridSchedule,
) -> Result<ExtReal> {
    check_dir(f, w)?;
    let q = Quotient { f, x, fx: f.finite_at(x)?, kind: Kind::First };
    let levels = q.run(w, sched, false)?;
    let value = stabilize(&levels);
    if value.is_inf() {
        return Ok(value);
    }
    let n = levels.len();
    match (levels[n - 1].value.finite(), levels[n - 2].value.finite()) {
        (Some(a), Some(b)) => ExtReal::from_f64((a - sched.ratio * b) / (1.0 - sched.ratio)),
        _ => Ok(value),
    }
}

/// `d²f(x, v)(w)` as the stabilized minimum of `Δ²_t f(x, v)(w′)`.
pub fn estimate_second_subderivative(
    f: &SampledFunction,
    x: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
    sched: &GridSchedule,
) -> Result<ExtReal> {
    Ok(second_subderivative_detailed(f, x, v, w, sched)?.value)
}

pub fn second_subderivative_detailed(
    f: &SampledFunction,
    x: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
    sched: &GridSchedule,
) -> Result<Estimate> {
    check_dir(f, v)?;
    check_dir(f, w)?;
    let q = Quotient { f, x, fx: f.finite_at(x)?, kind: Kind::Second { v } };
    let levels = q.run(w, sched, false)?;
    Ok(Estimate { value: stabilize(&levels), levels })
}

/// `d²f(x)(w | z)` as the stabilized minimum of the parabolic quotient over `z′`
/// near `z`; `dfw` is the caller's value of `d f(x)(w)`.
pub fn estimate_parabolic_subderivative(
    f: &SampledFunction,
    x: &DVector<f64>,
    w: &DVector<f64>,
    dfw: f64,
    z: &DVector<f64>,
    sched: &GridSchedule,
) -> Result<ExtReal> {
    Ok(parabolic_detailed(f, x, w, dfw, z, sched, false)?.value)
}

fn parabolic_detailed(
    f: &SampledFunction,
    x: &DVector<f64>,
    w: &DVector<f64>,
    dfw: f64,
    z: &DVector<f64>,
    sched: &GridSchedule,
    cheap: bool,
) -> Result<Estimate> {
    check_dir(f, w)?;
    check_dir(f, z)?;
    if !dfw.is_finite() {
        return Err(Error::SubderivativeNotFinite);
    }
    let q = Quotient { f, x, fx: f.finite_at(x)?, kind: Kind::Parabolic { w, dfw } };
    let levels = q.run(z, sched, cheap)?;
    Ok(Estimate { value: stabilize(&levels), levels })
}

/// Formula-versus-oracle comparison for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiReport {
    pub direction: DVector<f64>,
    pub formula_value: ExtReal,
    pub oracle_value: ExtReal,
    /// `(t_k, w_k, Δ²_{t_k} f(x, v)(w_k))` for every level.
    pub achieving_sequence: Vec<(f64, DVector<f64>, ExtReal)>,
    pub converged: bool,
    /// `|formula − oracle|`; `0` when both are `+∞`, `∞` when exactly one is.
    pub gap: f64,
}

pub fn gap_between(a: &ExtReal, b: &ExtReal) -> f64 {
    match (a, b) {
        (ExtReal::Finite(p), ExtReal::Finite(q)) => (p - q).abs(),
        (ExtReal::PlusInf, ExtReal::PlusInf) => 0.0,
        _ => f64::INFINITY,
    }
}

/// Searches a recovery sequence `w_k → w` for every direction and compares the
/// stabilized quotient with `formula(w)`.
pub fn check_twice_epi_diff(
    f: &SampledFunction,
    x: &DVector<f64>,
    v: &DVector<f64>,
    dirs: &[DVector<f64>],
    formula: &dyn Fn(&DVector<f64>) -> Result<ExtReal>,
    sched: &GridSchedule,
) -> Result<Vec<EpiReport>> {
    let mut out = Vec::with_capacity(dirs.len());
    for w in dirs {
        let formula_value = formula(w)?;
        let est = second_subderivative_detailed(f, x, v, w, sched)?;
        let converged = within_tolerance(&formula_value, &est.value);
        out.push(EpiReport {
            direction: w.clone(),
            formula_value,
            oracle_value: est.value,
            achieving_sequence: est.levels.into_iter().map(|l| (l.t, l.arg, l.value)).collect(),
            converged,
            gap: gap_between(&formula_value, &est.value),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicRegularity {
    pub holds: bool,
    /// Oracle estimate of `d²f(x, v)(w)`.
    pub lhs: ExtReal,
    /// `inf_z { d²f(x)(w | z) − ⟨z, v⟩ }` over the search grid.
    pub rhs: ExtReal,
    pub argmin_z: Option<DVector<f64>>,
}

/// Half-width of the `z` box.
pub const Z_BOX: f64 = 10.0;
/// Cap on the number of `z` grid points.
pub const Z_GRID_CAP: usize = 100_000;

/// Odd number of points per axis with `p^n ≤ min(samples_per_axis³, 10⁵)`.
pub fn z_grid_per_axis(n: usize, sched: &GridSchedule) -> usize {
    let budget = sched.samples_per_axis.pow(3).min(Z_GRID_CAP).max(1);
    let mut p = (budget as f64).powf(1.0 / n.max(1) as f64).round() as usize;
    while p > 1 && p.pow(n as u32) > budget {
        p -= 1;
    }
    if p % 2 == 0 {
        p -= 1;
    }
    p.max(1)
}

/// Compares the second subderivative with the parabolic inf-formula
/// `inf_z { d²f(x)(w | z) − ⟨z, v⟩ }` along a critical direction.
pub fn check_parabolic_regularity(
    f: &SampledFunction,
    x: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
    sched: &GridSchedule,
) -> Result<ParabolicRegularity> {
    check_dir(f, v)?;
    let vw = v.dot(w);
    let dfw = estimate_subderivative(f, x, w, sched)?;
    match dfw.finite() {
        Some(d) if (d - vw).abs() <= 1e-6 * (1.0 + vw.abs()) => {}
        _ => return Err(Error::CriticalConePreconditionFailed),
    }
    let lhs = estimate_second_subderivative(f, x, v, w, sched)?;

    let n = f.dim();
    let p = z_grid_per_axis(n, sched);
    let axis: Vec<f64> = if p == 1 {
        vec![0.0]
    } else {
        (0..p).map(|i| -Z_BOX + 2.0 * Z_BOX * i as f64 / (p - 1) as f64).collect()
    };
    let objective = |z: &DVector<f64>, cheap: bool| -> Result<ExtReal> {
        let e = parabolic_detailed(f, x, w, vw, z, sched, cheap)?;
        Ok(match e.value {
            ExtReal::Finite(a) => ExtReal::from_f64(a - z.dot(v))?,
            ExtReal::PlusInf => ExtReal::PlusInf,
        })
    };
    let mut best: Option<(DVector<f64>, ExtReal)> = None;
    for mut idx in 0..p.pow(n as u32) {
        let mut z = DVector::zeros(n);
        for k in 0..n {
            z[k] = axis[idx % p];
            idx /= p;
        }
        let val = objective(&z, true)?;
        if best.as_ref().map_or(true, |b| val < b.1) {
            best = Some((z, val));
        }
    }
    let (mut z, _) = best.expect("grid nonempty");
    let mut val = objective(&z, false)?;
    if val.is_finite() {
        let mut step = if p > 1 { 2.0 * Z_BOX / (p - 1) as f64 } else { Z_BOX };
        while step > 1e-6 {
            let mut improved = false;
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut c = z.clone();
                    c[i] = (c[i] + s * step).clamp(-Z_BOX, Z_BOX);
                    let cv = objective(&c, false)?;
                    if cv < val {
                        z = c;
                        val = cv;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }
    let holds = within_tolerance(&lhs, &val);
    Ok(ParabolicRegularity { holds, lhs, rhs: val, argmin_z: val.is_finite().then_some(z) })
}

/// Smallest `r` with `f(x′) ≥ f(x) + ⟨v, x′ − x⟩ − (r/2)‖x′ − x‖²` over
/// seeded samples in the ball of radius `radius`.
pub fn estimate_prox_modulus(
    f: &SampledFunction,
    x: &DVector<f64>,
    v: &DVector<f64>,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_dir(f, v)?;
    let fx = f.finite_at(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = f.dim();
    let mut r: f64 = 0.0;
    for _ in 0..n_samples {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gn = g.norm();
        if gn == 0.0 {
            continue;
        }
        let d = g * (radius * rng.gen::<f64>().powf(1.0 / n as f64) / gn);
        let dn2 = d.norm_squared();
        if dn2 < 1e-300 {
            continue;
        }
        if let ExtReal::Finite(fp) = f.eval(&(x + &d))? {
            r = r.max(2.0 * (fx + v.dot(&d) - fp) / dn2);
        }
    }
    Ok(r)
}
