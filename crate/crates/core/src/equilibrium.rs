//! Subgradients of the market risk measure and the equilibria they induce.

use crate::error::{dim_check, Error, Result};
use crate::linprog::{Affine, LpModel, LpStatus, Relation, Sense};
use crate::market::{common_unit, lambda_raw, AgentSystem, Allocation};
use crate::report::Report;
use crate::scenario::{Extended, Functional};

pub const BUDGET_TOL: f64 = 1e-8;
pub const PRICE_TOL: f64 = 1e-8;
pub const OPTIMALITY_TOL: f64 = 1e-6;
/// Step of the interiority probe around the aggregate endowment.
pub const INTERIOR_PROBE: f64 = 1e-6;

/// An allocation together with a linear price under which every agent
/// already holds an optimal affordable position.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub allocation: Allocation,
    pub price: Functional,
}

/// Subgradient of the market risk measure at `x` from the duals of the
/// aggregate constraint in the joint program, with the Fenchel gap
/// `|Lambda(X) - phi(X) + sum_i rho_i*(phi)|`.
pub fn subgradient(s: &AgentSystem, x: &[f64]) -> Result<(Functional, f64)> {
    let sol = lambda_raw(s, x)?.ok_or_else(|| Error::Domain("loss is outside the domain of the market risk".into()))?;
    let phi = sol.subgradient_functional(s.space())?;
    let mut conj = 0.0;
    for r in s.regimes() {
        match r.conjugate(&phi)? {
            Extended::Finite(v) => conj += v,
            Extended::Infinite => return Ok((phi, f64::INFINITY)),
        }
    }
    let gap = (sol.value - (phi.apply_raw(x) - conj)).abs();
    Ok((phi, gap))
}

/// Whether the market risk is finite at `x` and at every `x +- eps e_w`.
pub fn is_interior(s: &AgentSystem, x: &[f64], eps: f64) -> Result<bool> {
    if lambda_raw(s, x)?.is_none() {
        return Ok(false);
    }
    for w in 0..x.len() {
        for sign in [1.0, -1.0] {
            let mut y = x.to_vec();
            y[w] += sign * eps;
            if lambda_raw(s, &y)?.is_none() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Equilibrium from a Pareto allocation of the aggregate endowment: each
/// agent receives its Pareto share plus the security common to all agents
/// in the amount that balances its budget.
pub fn build_equilibrium(s: &AgentSystem, endowments: &[Vec<f64>]) -> Result<Equilibrium> {
    dim_check("endowments", endowments.len(), s.len())?;
    let n = s.space().len();
    for e in endowments {
        dim_check("endowment", e.len(), n)?;
    }
    let unit = common_unit(s)
        .ok_or_else(|| Error::Contract("no security shared by all agents has a non-zero price".into()))?;
    let total = Allocation::new(endowments.to_vec()).total();
    if !is_interior(s, &total, INTERIOR_PROBE)? {
        return Err(Error::Domain("aggregate endowment is not interior to the domain of the market risk".into()));
    }
    let sol = lambda_raw(s, &total)?.expect("interior point has finite risk");
    let price = sol.subgradient_functional(s.space())?;
    let scale = price.apply_raw(&unit);
    if (scale - 1.0).abs() > PRICE_TOL {
        return Err(Error::Numerical(format!("subgradient prices the common unit at {scale}, not one")));
    }
    let parts = sol
        .allocation
        .parts
        .iter()
        .zip(endowments)
        .map(|(y, w)| {
            let diff: Vec<f64> = w.iter().zip(y).map(|(a, b)| a - b).collect();
            let t = price.apply_raw(&diff);
            y.iter().zip(&unit).map(|(a, u)| a + t * u).collect()
        })
        .collect();
    Ok(Equilibrium { allocation: Allocation::new(parts), price })
}

/// `min rho_i(Y)` over `phi(Y) >= budget`, for an LP-representable agent.
fn best_affordable(s: &AgentSystem, i: usize, phi: &[f64], budget: f64) -> Result<Option<f64>> {
    let r = &s.regimes()[i];
    let mut m = LpModel::new();
    let support = r.support().indices();
    let ys: Vec<usize> = support.iter().map(|_| m.free_var(0.0)).collect();
    let cs: Vec<usize> = r.market().prices().iter().map(|&p| m.free_var(p)).collect();
    let y: Vec<Affine> = support
        .iter()
        .zip(&ys)
        .map(|(&w, &v)| cs.iter().zip(r.market().basis()).fold(Affine::constant(0.0).plus(v, 1.0), |e, (&c, b)| e.plus(c, -b[w])))
        .collect();
    r.acceptance().encode(&mut m, s.space().probs(), &support, &y)?;
    m.row(support.iter().zip(&ys).map(|(&w, &v)| (v, phi[w])).collect(), Relation::Ge, budget);
    let sol = m.build(Sense::Minimize).solve()?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.objective),
        LpStatus::Infeasible => None,
        LpStatus::Unbounded => Some(f64::NEG_INFINITY),
    })
}

/// Checks positivity and consistency of the price, budgets, individual
/// optimality, Pareto optimality and attainability.
pub fn verify_equilibrium(s: &AgentSystem, endowments: &[Vec<f64>], eq: &Equilibrium) -> Result<Report> {
    dim_check("endowments", endowments.len(), s.len())?;
    dim_check("allocation", eq.allocation.parts.len(), s.len())?;
    let mut rep = Report::new();
    let w = eq.price.weights();
    let min_w = w.iter().copied().fold(f64::INFINITY, f64::min);
    rep.push_tol("price.positive", min_w >= -1e-12, Some(min_w), 1e-12, "smallest scenario weight of the price");
    let mismatch = s.regimes().iter().map(|r| r.price_mismatch(&eq.price)).fold(0.0, f64::max);
    rep.push_tol("price.consistent", mismatch <= PRICE_TOL, Some(mismatch), PRICE_TOL, "largest security mispricing");
    let total = Allocation::new(endowments.to_vec()).total();
    let attain = eq.allocation.residual(&total);
    let attain_tol = 1e-9 * (1.0 + total.iter().map(|v| v.abs()).fold(0.0, f64::max));
    rep.push_tol("allocation.attainable", attain <= attain_tol, Some(attain), attain_tol, "largest deviation of the parts' sum from the aggregate endowment");
    let mut rho_sum = 0.0;
    let mut finite = true;
    for (i, (xi, wi)) in eq.allocation.parts.iter().zip(endowments).enumerate() {
        let gap = (eq.price.apply_raw(xi) - eq.price.apply_raw(wi)).abs();
        rep.push_tol(&format!("budget.{i}"), gap <= BUDGET_TOL, Some(gap), BUDGET_TOL, "price of allocated minus endowed position");
        let r = &s.regimes()[i];
        let rho = match r.rho_raw(xi) {
            Ok(Extended::Finite(v)) => v,
            Ok(Extended::Infinite) | Err(_) => {
                finite = false;
                rep.push(&format!("optimal.{i}"), false, None, "allocated part has no finite risk");
                continue;
            }
        };
        rho_sum += rho;
        let budget = eq.price.apply_raw(wi);
        // lower bound on the affordable risk from the conjugate at the price
        let (best, how) = if r.acceptance().lp_representable() {
            (best_affordable(s, i, &w, budget)?, "affordable-risk program")
        } else {
            let c = r.conjugate(&eq.price)?;
            (c.finite().map(|c| budget - c), "conjugate lower bound")
        };
        let gap = best.map_or(f64::INFINITY, |b| rho - b);
        rep.push_tol(&format!("optimal.{i}"), gap.abs() <= OPTIMALITY_TOL, Some(gap), OPTIMALITY_TOL, format!("risk minus best affordable risk ({how})"));
    }
    if finite {
        match lambda_raw(s, &total) {
            Ok(Some(sol)) => {
                let gap = rho_sum - sol.value;
                let tol = BUDGET_TOL * (1.0 + sol.value.abs());
                rep.push_tol("pareto", gap.abs() <= tol, Some(gap), tol, "sum of risks minus market risk");
            }
            _ => rep.push("pareto", false, None, "market risk unavailable at the aggregate endowment"),
        }
    }
    Ok(rep)
}
