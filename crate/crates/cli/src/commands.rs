//! The four commands. Each returns a [`Report`] whose exit code reflects the
//! verdict; errors are returned as [`CliError`] and rendered by the caller.

use epidiff::catalog::SUBGRAD_TOL;
use epidiff::composite::{
    assembled_function, check_basic_cq, check_mscq, ChainContext, DualityInfo, MultiplierRepr,
};
use epidiff::optimality::{growth_scan, sms_certificate_with, sonc_at, SOCReport, Stationary};
use epidiff::oracle::{check_parabolic_regularity, check_twice_epi_diff, within_tolerance};
use epidiff::{Error, ExtReal, GridSchedule};
use nalgebra::DVector;
use serde_json::{json, Map, Value};

use crate::directions::{default_directions, off_cone_directions};
use crate::problem::Instance;
use crate::report::{ext, fmt_ext, fmt_num, fmt_vec, num, vector};
use crate::{CliError, Report};

/// Directions tested by `certify` for SONC and SSOSC.
pub const CERTIFY_DIRECTIONS: usize = 8;
/// Samples drawn by the growth scan.
pub const GROWTH_SAMPLES: usize = 2000;
/// Growth modulus tried when SSOSC gives no positive margin.
pub const FALLBACK_GROWTH_MODULUS: f64 = 0.1;

fn tolerances() -> Value {
    json!({
        "agreement": "max(0.05, 5% of magnitude)",
        "subgradient": SUBGRAD_TOL,
    })
}

fn context_json(ctx: &ChainContext<'_>, inst: &Instance) -> Value {
    let m = &ctx.multipliers;
    let repr = match m.repr {
        MultiplierRepr::Polyhedron(_) => "polyhedron",
        MultiplierRepr::Spectral(_) => "spectral-face",
        MultiplierRepr::FiniteList => "finite-list",
    };
    json!({
        "x": vector(&ctx.x),
        "v": vector(&ctx.v),
        "v_source": if inst.v_given { "file" } else { "-grad phi" },
        "z": vector(&ctx.z),
        "kappa": num(ctx.kappa),
        "ell": num(ctx.ell),
        "tau": num(ctx.tau),
        "mscq": ctx.mscq_provenance.as_str(),
        "multipliers": {
            "representation": repr,
            "truncated_to_tau_box": m.truncated,
            "elements": m.elements.iter().map(vector).collect::<Vec<_>>(),
        },
        "outer_function": ctx.prob.outer.tag_name(),
    })
}

fn context_text(ctx: &ChainContext<'_>) -> String {
    let mut t = String::new();
    t.push_str(&format!("base point x = {}\n", fmt_vec(&ctx.x)));
    t.push_str(&format!("subgradient v = {}\n", fmt_vec(&ctx.v)));
    t.push_str(&format!(
        "kappa = {}, ell = {}, tau = {} (MSCQ {})\n",
        fmt_num(ctx.kappa),
        fmt_num(ctx.ell),
        fmt_num(ctx.tau),
        ctx.mscq_provenance.as_str()
    ));
    let ys: Vec<String> = ctx.multipliers.elements.iter().map(fmt_vec).collect();
    t.push_str(&format!(
        "multipliers{}: {}\n",
        if ctx.multipliers.truncated { " (vertices of the tau-box truncation)" } else { "" },
        ys.join(", ")
    ));
    t
}

fn context<'a>(inst: &'a Instance) -> Result<ChainContext<'a>, CliError> {
    Ok(ChainContext::new(&inst.prob, &inst.x, &inst.v, &inst.settings)?)
}

fn duality_json(w: &DVector<f64>, info: &DualityInfo) -> Value {
    let mut m = Map::new();
    m.insert("w".into(), vector(w));
    m.insert("critical".into(), json!(info.critical));
    m.insert("dual".into(), ext(&info.dual));
    m.insert("primal".into(), ext(&info.primal));
    m.insert("primal_provenance".into(), json!(info.primal_provenance.as_str()));
    m.insert("gap".into(), num(info.gap));
    if info.critical {
        m.insert("argmax_y".into(), vector(&info.argmax_y));
        if let Some(z) = &info.primal_argmin {
            m.insert("primal_argmin".into(), vector(z));
        }
    } else {
        m.insert("reason".into(), json!("outside critical cone"));
    }
    Value::Object(m)
}

/// Multipliers, `τ`, the critical cone, and `d²f(x, v)(w)` by both the dual
/// (multiplier) formula and the primal (parabolic) formula.
pub fn analyze(inst: &Instance, dirs: Option<Vec<DVector<f64>>>) -> Result<Report, CliError> {
    let ctx = context(inst)?;
    let cone = ctx.critical_cone()?;
    let dirs = match dirs {
        Some(d) => d,
        None => default_directions(&cone, inst.prob.n(), inst.settings.seed)?,
    };
    let mut text = context_text(&ctx);
    text.push_str(&format!("critical cone: {}\n", cone.describe()));
    text.push_str("second subderivative d2f(x, v)(w):\n");
    let mut rows = Vec::new();
    let mut disagree = false;
    for w in &dirs {
        let info = ctx.second_subderivative(w)?;
        if !within_tolerance(&info.primal, &info.dual) {
            disagree = true;
        }
        let line = if info.critical {
            format!(
                "  w = {}: dual {}, primal {} [{}], gap {}, argmax y = {}\n",
                fmt_vec(w),
                fmt_ext(&info.dual),
                fmt_ext(&info.primal),
                info.primal_provenance.as_str(),
                fmt_num(info.gap),
                fmt_vec(&info.argmax_y)
            )
        } else {
            format!("  w = {}: +inf (outside critical cone)\n", fmt_vec(w))
        };
        text.push_str(&line);
        rows.push(duality_json(w, &info));
    }
    if disagree {
        text.push_str("primal and dual values disagree beyond tolerance\n");
    }
    let mut json = context_json(&ctx, inst);
    let obj = json.as_object_mut().expect("object");
    obj.insert("command".into(), json!("analyze"));
    obj.insert("seed".into(), json!(inst.settings.seed));
    obj.insert("critical_cone".into(), json!(cone.describe()));
    obj.insert("directions".into(), Value::Array(rows));
    obj.insert("tolerances".into(), tolerances());
    Ok(Report { text, json, exit_code: if disagree { 1 } else { 0 } })
}

/// Options for [`verify`].
#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub dirs: Option<Vec<DVector<f64>>>,
    pub schedule: Option<GridSchedule>,
    /// Added to every finite formula value; a harness self-test hook.
    pub formula_offset: f64,
}

/// Closed-form `d²f(x, v)` against the difference-quotient oracle along each
/// direction, plus the parabolic-regularity identity on critical directions.
pub fn verify(inst: &Instance, opts: &VerifyOptions) -> Result<Report, CliError> {
    let ctx = context(inst)?;
    let cone = ctx.critical_cone()?;
    let n = inst.prob.n();
    let seed = inst.settings.seed;
    let dirs = match &opts.dirs {
        Some(d) => d.clone(),
        None => {
            let mut d = default_directions(&cone, n, seed)?;
            d.extend(off_cone_directions(&cone, n, seed));
            d
        }
    };
    let sched = opts.schedule.unwrap_or(inst.settings.schedule);
    sched.validate()?;
    let f = assembled_function(&inst.prob, false);
    let offset = opts.formula_offset;
    let formula = |w: &DVector<f64>| -> epidiff::Result<ExtReal> {
        let d = ctx.second_subderivative(w)?.dual;
        Ok(match d {
            ExtReal::Finite(a) => ExtReal::Finite(a + offset),
            other => other,
        })
    };
    let reports = check_twice_epi_diff(&f, &inst.x, &inst.v, &dirs, &formula, &sched)?;
    let mut text = context_text(&ctx);
    text.push_str(&format!("critical cone: {}\n", cone.describe()));
    text.push_str(&format!(
        "schedule: t0 = {}, ratio = {}, steps = {}\n",
        sched.t0, sched.ratio, sched.steps
    ));
    text.push_str("formula vs oracle:\n");
    let mut rows = Vec::new();
    let mut all_converged = true;
    let mut max_gap: f64 = 0.0;
    for r in &reports {
        all_converged &= r.converged;
        max_gap = max_gap.max(r.gap);
        let critical = cone.contains(&r.direction);
        let mut row = Map::new();
        row.insert("w".into(), vector(&r.direction));
        row.insert("critical".into(), json!(critical));
        row.insert("formula".into(), ext(&r.formula_value));
        row.insert("oracle".into(), ext(&r.oracle_value));
        row.insert("gap".into(), num(r.gap));
        row.insert("converged".into(), json!(r.converged));
        if let Some((t, wk, val)) = r.achieving_sequence.last() {
            row.insert("finest_level".into(), json!({"t": num(*t), "w_t": vector(wk), "quotient": ext(val)}));
        }
        let mut pr_text = String::new();
        if critical && r.formula_value.is_finite() {
            let pr = match check_parabolic_regularity(&f, &inst.x, &inst.v, &r.direction, &sched) {
                Ok(p) => {
                    pr_text = format!(", parabolic regularity {}", if p.holds { "holds" } else { "fails" });
                    json!({"holds": p.holds, "lhs": ext(&p.lhs), "rhs": ext(&p.rhs)})
                }
                Err(e @ (Error::CriticalConePreconditionFailed | Error::SubderivativeNotFinite)) => {
                    pr_text = ", parabolic regularity skipped".into();
                    json!({"skipped": e.to_string()})
                }
                Err(e) => return Err(e.into()),
            };
            row.insert("parabolic_regularity".into(), pr);
        }
        text.push_str(&format!(
            "  w = {}: formula {}, oracle {}, gap {}, {}{}\n",
            fmt_vec(&r.direction),
            fmt_ext(&r.formula_value),
            fmt_ext(&r.oracle_value),
            fmt_num(r.gap),
            if r.converged { "converged" } else { "NOT converged" },
            pr_text
        ));
        rows.push(Value::Object(row));
    }
    text.push_str(&format!(
        "{} of {} directions converged; max gap {}\n",
        reports.iter().filter(|r| r.converged).count(),
        reports.len(),
        fmt_num(max_gap)
    ));
    let mut json = context_json(&ctx, inst);
    let obj = json.as_object_mut().expect("object");
    obj.insert("command".into(), json!("verify"));
    obj.insert("seed".into(), json!(seed));
    obj.insert("critical_cone".into(), json!(cone.describe()));
    obj.insert(
        "schedule".into(),
        json!({
            "t0": sched.t0, "ratio": sched.ratio, "steps": sched.steps,
            "radius_coeff": sched.radius_coeff, "radius_exponent": sched.radius_exponent,
            "samples_per_axis": sched.samples_per_axis,
        }),
    );
    obj.insert("directions".into(), Value::Array(rows));
    obj.insert("all_converged".into(), json!(all_converged));
    obj.insert("max_gap".into(), num(max_gap));
    obj.insert("tolerances".into(), tolerances());
    if offset != 0.0 {
        obj.insert("formula_offset".into(), num(offset));
    }
    Ok(Report { text, json, exit_code: if all_converged { 0 } else { 1 } })
}

fn soc_json(r: &SOCReport) -> Value {
    json!({
        "holds": r.holds,
        "worst_value": ext(&r.worst_value),
        "worst_direction": vector(&r.worst_direction),
        "directions_tested": r.directions_tested,
        "method": r.method.as_str(),
    })
}

/// SONC, SSOSC, a quadratic-growth scan and the strong metric subregularity
/// certificate at `v = −∇φ(x)`.
pub fn certify(inst: &Instance) -> Result<Report, CliError> {
    let (prob, x, seed) = (&inst.prob, &inst.x, inst.settings.seed);
    let st = Stationary::new(prob, x, &inst.settings)?;
    let sonc = sonc_at(&st, CERTIFY_DIRECTIONS, seed)?;
    let cert = sms_certificate_with(prob, x, CERTIFY_DIRECTIONS, seed)?;
    let ssosc = &cert.ssosc;
    // Half the SSOSC margin is the modulus the sufficient condition predicts.
    let ell = match ssosc.worst_value {
        ExtReal::Finite(m) if ssosc.holds && m > 0.0 => m / 2.0,
        ExtReal::PlusInf if ssosc.holds => 1.0,
        _ => FALLBACK_GROWTH_MODULUS,
    };
    let growth = growth_scan(prob, x, ell, GROWTH_SAMPLES, seed)?;
    let mut text = String::new();
    text.push_str(&format!("base point x = {}\n", fmt_vec(x)));
    text.push_str(&format!(
        "SONC: {} (min {} over {} directions, {})\n",
        if sonc.holds { "holds" } else { "fails" },
        fmt_ext(&sonc.worst_value),
        sonc.directions_tested,
        sonc.method.as_str()
    ));
    text.push_str(&format!(
        "SSOSC: {} (min {} at w = {})\n",
        if ssosc.holds { "holds" } else { "fails" },
        fmt_ext(&ssosc.worst_value),
        fmt_vec(&ssosc.worst_direction)
    ));
    text.push_str(&format!(
        "growth with modulus {} at radius {}: {} ({} samples, {} violations, largest consistent modulus {})\n",
        fmt_num(growth.ell),
        growth.epsilon,
        if growth.passed() { "passes" } else { "fails" },
        growth.samples,
        growth.violations,
        fmt_num(growth.ell_found)
    ));
    text.push_str(&format!(
        "certificate: {}\n  {}\nassumptions:\n",
        if cert.affirmative { "affirmative" } else { "negative" },
        cert.equivalence_note
    ));
    for a in &cert.assumptions {
        text.push_str(&format!("  {}: {}\n", a.name, a.status));
    }
    let assumptions: Vec<Value> =
        cert.assumptions.iter().map(|a| json!({"name": a.name, "status": a.status})).collect();
    let json = json!({
        "command": "certify",
        "seed": seed,
        "x": vector(x),
        "sonc": soc_json(&sonc),
        "ssosc": soc_json(ssosc),
        "growth": {
            "ell": num(growth.ell),
            "ell_found": num(growth.ell_found),
            "epsilon": num(growth.epsilon),
            "samples": growth.samples,
            "violations": growth.violations,
            "passed": growth.passed(),
        },
        "certificate": {
            "affirmative": cert.affirmative,
            "note": cert.equivalence_note,
            "assumptions": assumptions,
        },
        "tolerances": tolerances(),
    });
    Ok(Report { text, json, exit_code: if cert.affirmative { 0 } else { 1 } })
}

/// Options for [`check_cq`].
#[derive(Debug, Clone, Copy)]
pub struct CqOptions {
    pub samples: usize,
    pub radius: f64,
}

impl Default for CqOptions {
    fn default() -> Self {
        CqOptions { samples: 200, radius: 0.1 }
    }
}

/// Sampled metric subregularity evidence and the basic qualification condition.
pub fn check_cq(inst: &Instance, opts: &CqOptions) -> Result<Report, CliError> {
    if opts.samples == 0 || !(opts.radius.is_finite() && opts.radius > 0.0) {
        return Err(CliError::validation("--samples/--radius", "need at least one sample and a positive radius"));
    }
    let (prob, x, seed) = (&inst.prob, &inst.x, inst.settings.seed);
    let mscq = check_mscq(prob, x, opts.samples, opts.radius, seed)?;
    let basic = check_basic_cq(prob, x)?;
    let text = format!(
        "base point x = {}\nMSCQ: {} (kappa estimate {}, {} ratios, worst point {})\n  largest ratio at radius r, r/2, r/4: {}, {}, {}\nbasic constraint qualification: {}\n",
        fmt_vec(x),
        if mscq.holds_evidence { "evidence holds" } else { "evidence fails" },
        fmt_num(mscq.kappa_hat),
        mscq.samples,
        fmt_vec(&mscq.worst_point),
        fmt_num(mscq.per_radius[0]),
        fmt_num(mscq.per_radius[1]),
        fmt_num(mscq.per_radius[2]),
        if basic { "holds" } else { "fails" },
    );
    let json = json!({
        "command": "check-cq",
        "seed": seed,
        "x": vector(x),
        "samples_requested": opts.samples,
        "radius": num(opts.radius),
        "mscq": {
            "holds_evidence": mscq.holds_evidence,
            "kappa_hat": num(mscq.kappa_hat),
            "worst_point": vector(&mscq.worst_point),
            "ratios": mscq.samples,
            "per_radius": mscq.per_radius.iter().map(|&a| num(a)).collect::<Vec<_>>(),
        },
        "basic_cq": basic,
    });
    Ok(Report { text, json, exit_code: if mscq.holds_evidence { 0 } else { 1 } })
}

/// Report for a failed command: diagnostic text and a JSON error object.
pub fn error_report(command: &str, err: &CliError) -> Report {
    let kind = match err {
        CliError::Io { .. } => "io",
        CliError::Parse { .. } => "parse",
        CliError::Validation { .. } => "validation",
        CliError::Calculus(_) if err.exit_code() == 1 => "numerical",
        CliError::Calculus(_) if err.exit_code() == 3 => "validation",
        CliError::Calculus(_) => "precondition",
    };
    let mut obj = Map::new();
    obj.insert("command".into(), json!(command));
    obj.insert("error".into(), json!(kind));
    obj.insert("message".into(), json!(err.diagnostic()));
    match err {
        CliError::Parse { line, column, .. } => {
            obj.insert("line".into(), json!(line));
            obj.insert("column".into(), json!(column));
        }
        CliError::Validation { field, .. } => {
            obj.insert("field".into(), json!(field));
        }
        _ => {}
    }
    Report { text: format!("error: {}\n", err.diagnostic()), json: Value::Object(obj), exit_code: err.exit_code() }
}
