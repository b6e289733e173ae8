use riskshare::equilibrium::{build_equilibrium, verify_equilibrium};
use riskshare::lawinv::{check_assumptions, lawinv_lambda};
use riskshare::market::{lambda_raw, nsa_check, shared_unit, shift_security, validate_star, Allocation};
use riskshare::oracle::{brute_lambda, fd_subgradient_check, verify_pareto, FdPath, GridSpec};
use riskshare::regime::validate_regime;
use riskshare::report::{Check, Report};
use riskshare::splits::{check_sup_infty, split_optimize};
use riskshare::{Error, Extended, Result, ScenarioSpace};
use serde_json::{json, Map, Value};

use crate::problem::Model;

/// Tolerance of the finite-difference gradient comparison.
pub const FD_TOL: f64 = 1e-4;

pub struct Outcome {
    pub doc: Value,
    /// Worst failure class among the checks, if any failed.
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Validation,
    Numerical,
}

pub struct Ctx<'a> {
    pub command: &'a str,
    pub file: &'a str,
    pub seed: u64,
    pub tol: f64,
}

fn labeled(space: &ScenarioSpace, v: &[f64]) -> Value {
    let mut m = Map::new();
    for (l, x) in space.labels().iter().zip(v) {
        m.insert(l.clone(), json!(x));
    }
    Value::Object(m)
}

fn ext(e: Extended) -> Value {
    match e {
        Extended::Finite(v) => json!(v),
        Extended::Infinite => json!("+inf"),
    }
}

fn per_agent(m: &Model, parts: &[Vec<f64>]) -> Value {
    let mut out = Map::new();
    for (n, p) in m.names.iter().zip(parts) {
        out.insert(n.clone(), labeled(&m.space, p));
    }
    Value::Object(out)
}

fn check_json(c: &Check) -> Value {
    json!({ "name": c.name, "passed": c.passed, "value": c.value, "tolerance": c.tolerance, "detail": c.detail })
}

fn report_json(prefix: &str, r: &Report, out: &mut Vec<Value>) {
    for c in &r.checks {
        let mut c = c.clone();
        c.name = format!("{prefix}{}", c.name);
        out.push(check_json(&c));
    }
}

fn push(out: &mut Vec<Value>, name: &str, passed: bool, value: f64, tol: f64, detail: &str) {
    out.push(json!({ "name": name, "passed": passed, "value": value, "tolerance": tol, "detail": detail }));
}

fn finish(ctx: &Ctx, inputs: Value, outputs: Value, checks: Vec<Value>, on_fail: Failure) -> Outcome {
    let failed = checks.iter().any(|c| c["passed"] == json!(false));
    let doc = json!({
        "command": ctx.command,
        "problem": ctx.file,
        "seed": ctx.seed,
        "tolerance": ctx.tol,
        "inputs": inputs,
        "outputs": outputs,
        "checks": checks,
        "passed": !failed,
    });
    Outcome { doc, failure: failed.then_some(on_fail) }
}

/// Pooled risk at `x` with an attaining allocation and a subgradient.
pub struct Pooled {
    pub method: &'static str,
    pub value: f64,
    pub payoff: Vec<f64>,
    pub allocation: Allocation,
    pub subgradient: Vec<f64>,
}

pub fn pooled(m: &Model, x: &[f64]) -> Result<Pooled> {
    if let Some(p) = &m.lawinv {
        let s = lawinv_lambda(p, x)?;
        return Ok(Pooled {
            method: "law-invariant",
            value: s.value,
            payoff: s.payoff,
            allocation: s.allocation,
            subgradient: s.subgradient,
        });
    }
    let s = lambda_raw(&m.system, x)?
        .ok_or_else(|| Error::Domain("loss is outside the domain of the market risk measure".into()))?;
    Ok(Pooled { method: "linear program", value: s.value, payoff: s.payoff, allocation: s.allocation, subgradient: s.subgradient })
}

fn rho(m: &Model, i: usize, y: &[f64]) -> Result<f64> {
    m.system.regimes()[i].rho_raw(y)?.expect_finite(&format!("risk of agent '{}'", m.names[i]))
}

/// Per-agent risks, their sum and the checks that the allocation is
/// attainable and attains the pooled value.
fn certify_allocation(m: &Model, ctx: &Ctx, x: &[f64], value: f64, alloc: &Allocation, checks: &mut Vec<Value>) -> Result<(Value, f64)> {
    let mut risks = Map::new();
    let mut sum = 0.0;
    for (i, (n, p)) in m.names.iter().zip(&alloc.parts).enumerate() {
        let r = rho(m, i, p)?;
        sum += r;
        risks.insert(n.clone(), json!(r));
    }
    let scale = 1.0 + value.abs();
    let res = alloc.residual(x);
    let res_tol = ctx.tol * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    push(checks, "allocation.attainable", res <= res_tol, res, res_tol, "largest deviation of the parts' sum from the loss");
    push(checks, "allocation.pareto", (sum - value).abs() <= ctx.tol * scale, sum - value, ctx.tol * scale, "sum of individual risks minus the pooled risk");
    Ok((Value::Object(risks), sum))
}

pub fn validate(m: &Model, ctx: &Ctx) -> Result<Outcome> {
    let mut checks = Vec::new();
    for (n, r) in m.names.iter().zip(m.system.regimes()) {
        report_json(&format!("agent.{n}."), &validate_regime(r, ctx.seed)?, &mut checks);
    }
    let star = validate_star(&m.system);
    report_json("", &star.report, &mut checks);
    let nsa = nsa_check(&m.system)?;
    checks.push(json!({
        "name": "nsa.holds", "passed": nsa.holds, "value": nsa.dim, "tolerance": null,
        "detail": format!("dimension of zero-sum security prices is {} with {} agents", nsa.dim, nsa.agents),
    }));
    checks.push(json!({
        "name": "nsa.consistent", "passed": nsa.consistent(), "value": null, "tolerance": null,
        "detail": "rank verdict agrees with the linear program",
    }));
    if let Some(p) = &m.lawinv {
        report_json("lawinv.", &check_assumptions(p)?, &mut checks);
    }
    let edges: Vec<Value> = star.edges.iter().map(|&(i, j)| json!([m.names[i], m.names[j]])).collect();
    let outputs = json!({
        "agents": m.names,
        "scenarios": m.space.labels(),
        "nsa": {
            "dim": nsa.dim,
            "agents": nsa.agents,
            "holds": nsa.holds,
            "lp_unbounded": nsa.lp_unbounded,
            "price_of_zero": if nsa.holds { json!(0.0) } else { json!("-inf") },
        },
        "star_edges": edges,
        "law_invariant": m.lawinv.is_some(),
    });
    Ok(finish(ctx, json!({}), outputs, checks, Failure::Validation))
}

pub fn rho_cmd(m: &Model, ctx: &Ctx, agent: &str, x: &[f64]) -> Result<Outcome> {
    let i = m.agent(agent)?;
    let r = &m.system.regimes()[i];
    let value = r.rho_raw(x)?;
    let security = match value {
        Extended::Finite(_) => r.optimal_security(x)?.map(|z| labeled(&m.space, &z)),
        Extended::Infinite => None,
    };
    let inputs = json!({ "agent": m.names[i], "loss": labeled(&m.space, x) });
    let outputs = json!({ "value": ext(value), "security": security });
    Ok(finish(ctx, inputs, outputs, Vec::new(), Failure::Numerical))
}

pub fn lambda_cmd(m: &Model, ctx: &Ctx, x: &[f64]) -> Result<Outcome> {
    let p = pooled(m, x)?;
    let mut checks = Vec::new();
    let price = m.system.price(&p.payoff)?;
    let scale = 1.0 + p.value.abs();
    push(&mut checks, "payoff.price", (price - p.value).abs() <= ctx.tol * scale, price - p.value, ctx.tol * scale, "price of the optimal payoff minus the pooled risk");
    let (risks, risk_sum) = certify_allocation(m, ctx, x, p.value, &p.allocation, &mut checks)?;
    let outputs = json!({
        "method": p.method,
        "value": p.value,
        "payoff": labeled(&m.space, &p.payoff),
        "allocation": per_agent(m, &p.allocation.parts),
        "risks": risks,
        "risk_sum": risk_sum,
        "subgradient": labeled(&m.space, &p.subgradient),
    });
    Ok(finish(ctx, json!({ "loss": labeled(&m.space, x) }), outputs, checks, Failure::Numerical))
}

pub fn pareto_cmd(m: &Model, ctx: &Ctx, x: &[f64], zeta: Option<f64>) -> Result<Outcome> {
    let p = pooled(m, x)?;
    let (alloc, direction) = match zeta {
        None => (p.allocation, None),
        Some(t) => {
            if m.system.len() < 2 {
                return Err(Error::Unsupported("shifting needs at least two agents".into()));
            }
            let z = shared_unit(&m.system, 0, 1).ok_or_else(|| {
                Error::Unsupported(format!("agents '{}' and '{}' share no security priced at one", m.names[0], m.names[1]))
            })?;
            (shift_security(&m.system, &p.allocation, 1, 0, &z, t)?, Some(z))
        }
    };
    let mut checks = Vec::new();
    let (risks, risk_sum) = certify_allocation(m, ctx, x, p.value, &alloc, &mut checks)?;
    let outputs = json!({
        "value": p.value,
        "allocation": per_agent(m, &alloc.parts),
        "risks": risks,
        "risk_sum": risk_sum,
        "shift": direction.map(|z| json!({ "from": m.names[1], "to": m.names[0], "payoff": labeled(&m.space, &z) })),
    });
    let inputs = json!({ "loss": labeled(&m.space, x), "zeta": zeta });
    Ok(finish(ctx, inputs, outputs, checks, Failure::Numerical))
}

pub fn equilibrium_cmd(m: &Model, ctx: &Ctx, endowments: &[Vec<f64>]) -> Result<Outcome> {
    let eq = build_equilibrium(&m.system, endowments)?;
    let mut checks = Vec::new();
    report_json("", &verify_equilibrium(&m.system, endowments, &eq)?, &mut checks);
    let budgets: Map<String, Value> =
        m.names.iter().zip(endowments).map(|(n, w)| (n.clone(), json!(eq.price.apply_raw(w)))).collect();
    let outputs = json!({
        "allocation": per_agent(m, &eq.allocation.parts),
        "price": labeled(&m.space, &eq.price.weights()),
        "budgets": budgets,
    });
    Ok(finish(ctx, json!({ "endowments": per_agent(m, endowments) }), outputs, checks, Failure::Numerical))
}

pub fn split_cmd(m: &Model, ctx: &Ctx, x: &[f64]) -> Result<Outcome> {
    let p = m.split_problem()?;
    let r = split_optimize(&p, x)?;
    let mut checks = Vec::new();
    let sup = match p.reference_price.clone() {
        Some(phi) => Some(phi),
        None => match &p.factory {
            riskshare::splits::RegimeFactory::LawInvariant { scale, .. } => {
                Some(riskshare::Functional::new(m.space.clone(), vec![*scale; m.space.len()])?)
            }
            _ => None,
        },
    };
    // diagnostics only: a failing series check disables the stopping bound
    let mut series = Vec::new();
    if let Some(phi) = sup {
        report_json("", &check_sup_infty(&p, &phi)?.report, &mut series);
    }
    let trajectory: Vec<Value> = r
        .trajectory
        .iter()
        .map(|s| json!({ "n": s.n, "lambda": s.lambda, "cost": s.cost, "objective": s.objective }))
        .collect();
    let best = r.trajectory.iter().map(|s| s.objective).fold(f64::INFINITY, f64::min);
    let gap = r.objective - best;
    push(&mut checks, "split.minimal", gap <= ctx.tol * (1.0 + best.abs()), gap, ctx.tol * (1.0 + best.abs()), "chosen objective minus the best evaluated objective");
    let res = r.allocation.residual(x);
    let res_tol = ctx.tol * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    push(&mut checks, "split.attainable", res <= res_tol, res, res_tol, "largest deviation of the parts' sum from the loss");
    let parts: Vec<Value> = r.allocation.parts.iter().map(|q| labeled(&m.space, q)).collect();
    let outputs = json!({
        "n_star": r.n_star,
        "value": r.value,
        "objective": r.objective,
        "lower_bound": r.lower_bound,
        "cap_limited": r.cap_limited,
        "series_checks": series,
        "trajectory": trajectory,
        "allocation": parts,
    });
    Ok(finish(ctx, json!({ "loss": labeled(&m.space, x), "n_max": p.n_max }), outputs, checks, Failure::Numerical))
}

pub struct OracleArgs {
    pub h: f64,
    pub radius: f64,
    pub samples: usize,
}

pub fn oracle_cmd(m: &Model, ctx: &Ctx, check: &str, x: &[f64], o: &OracleArgs) -> Result<Outcome> {
    let p = pooled(m, x)?;
    let mut checks = Vec::new();
    let inputs = json!({ "loss": labeled(&m.space, x), "check": check, "h": o.h, "radius": o.radius, "samples": o.samples });
    let outputs = match check {
        "lambda" => {
            let g = GridSpec::around(&p.allocation.parts[0], o.radius, o.h)?;
            let b = brute_lambda(&m.system, x, &g)?;
            let tol = ctx.tol * (1.0 + p.value.abs());
            push(&mut checks, "oracle.upper", p.value <= b.estimate + tol, p.value - b.estimate, tol, "pooled risk minus the grid minimum");
            push(&mut checks, "oracle.lower", p.value >= b.lower_bound - tol, b.lower_bound - p.value, tol, "grid lower bound minus the pooled risk");
            json!({ "value": p.value, "estimate": b.estimate, "lower_bound": b.lower_bound, "omega": b.omega, "lipschitz": b.lipschitz, "points": b.points })
        }
        "pareto" => {
            let g = GridSpec::around(&p.allocation.parts[0], o.radius, o.h)?;
            let v = verify_pareto(&m.system, x, &p.allocation, &g)?;
            checks.push(json!({
                "name": "oracle.pareto", "passed": v.pareto, "value": null, "tolerance": v.omega,
                "detail": "no grid allocation improves both agents by more than the grid error",
            }));
            json!({
                "value": p.value,
                "allocation": per_agent(m, &p.allocation.parts),
                "omega": v.omega,
                "witness": v.witness.map(|w| per_agent(m, &w.parts)),
            })
        }
        "subgradient" => {
            let f = |y: &[f64]| pooled(m, y).ok().map(|s| s.value);
            let c = fd_subgradient_check(&f, x, &p.subgradient, FD_TOL, o.samples, ctx.seed)?;
            let (path, tol) = match c.path {
                FdPath::Smooth => ("smooth", FD_TOL),
                FdPath::Kink => ("kink", 1e-8),
            };
            push(&mut checks, "oracle.subgradient", c.passed, c.error, tol, "finite-difference error or largest subgradient-inequality violation");
            json!({ "value": p.value, "subgradient": labeled(&m.space, &p.subgradient), "path": path, "error": c.error })
        }
        other => return Err(Error::Invalid(format!("unknown oracle check '{other}' (lambda, pareto, subgradient)"))),
    };
    Ok(finish(ctx, inputs, outputs, checks, Failure::Numerical))
}
