//! Systems of agents, the market risk measure obtained by pooling their
//! acceptance sets and securities, and Pareto optimal allocations.

use std::sync::Arc;

use crate::error::{dim_check, Error, Result};
use crate::linprog::{self, coefficients_in_span, null_space, orthonormalize, Affine, LpModel, LpStatus, Relation, Sense};
use crate::regime::{AcceptanceSet, RiskMeasurementRegime};
use crate::report::Report;
use crate::scenario::{same_space, Extended, Functional, RandomVariable, ScenarioSpace};

/// Tolerance for price agreement on shared securities.
pub const PRICE_TOL: f64 = 1e-10;
/// Tolerance for `sum X_i = X`.
pub const ALLOCATION_TOL: f64 = 1e-10;

/// Agents sharing one scenario space. Their supports must cover it.
#[derive(Debug, Clone)]
pub struct AgentSystem {
    space: Arc<ScenarioSpace>,
    regimes: Vec<RiskMeasurementRegime>,
}

impl AgentSystem {
    pub fn new(regimes: Vec<RiskMeasurementRegime>) -> Result<Self> {
        let Some(first) = regimes.first() else {
            return Err(Error::Invalid("an agent system needs at least one agent".into()));
        };
        let space = first.space().clone();
        for r in &regimes[1..] {
            same_space(&space, r.space())?;
        }
        let uncovered: Vec<&str> = (0..space.len())
            .filter(|&w| !regimes.iter().any(|r| r.support().contains(w)))
            .map(|w| space.labels()[w].as_str())
            .collect();
        if !uncovered.is_empty() {
            return Err(Error::Invalid(format!("scenarios {uncovered:?} are outside every agent's support")));
        }
        Ok(Self { space, regimes })
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        &self.space
    }

    pub fn regimes(&self) -> &[RiskMeasurementRegime] {
        &self.regimes
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    /// Every agent's acceptance set can be written with linear constraints.
    pub fn lp_representable(&self) -> bool {
        self.regimes.iter().all(|r| r.acceptance().lp_representable())
    }

    /// System without agent `i`.
    pub fn without(&self, i: usize) -> Result<Self> {
        let mut rs = self.regimes.clone();
        rs.remove(i);
        Self::new(rs)
    }

    /// A basis of the pooled security space, greedily taken from the agents'
    /// bases in order.
    pub fn pooled_basis(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut ortho: Vec<Vec<f64>> = Vec::new();
        for r in &self.regimes {
            for b in r.market().basis() {
                let mut cand = ortho.clone();
                cand.push(b.clone());
                let q = orthonormalize(&cand);
                if q.len() > ortho.len() {
                    ortho = q;
                    out.push(b.clone());
                }
            }
        }
        out
    }

    /// Market price of a pooled security, `sum_i price_i(Z_i)` over the
    /// selection of [`security_selection`]. Well defined under NSA.
    pub fn price(&self, z: &[f64]) -> Result<f64> {
        let parts = security_selection(self, z)?;
        let mut total = 0.0;
        for (r, p) in self.regimes.iter().zip(&parts) {
            total += r.market().price(p)?;
        }
        Ok(total)
    }

    pub fn rho_sum(&self, alloc: &Allocation) -> Result<Extended> {
        dim_check("allocation parts", alloc.parts.len(), self.len())?;
        let mut total = 0.0;
        for (r, x) in self.regimes.iter().zip(&alloc.parts) {
            match r.rho_raw(x)? {
                Extended::Finite(v) => total += v,
                Extended::Infinite => return Ok(Extended::Infinite),
            }
        }
        Ok(Extended::Finite(total))
    }
}

/// One loss vector per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub parts: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn new(parts: Vec<Vec<f64>>) -> Self {
        Self { parts }
    }

    pub fn total(&self) -> Vec<f64> {
        let n = self.parts.first().map_or(0, |p| p.len());
        let mut t = vec![0.0; n];
        for p in &self.parts {
            t.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        t
    }

    /// `max |sum X_i - X|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.total().iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn as_random_variables(&self, space: &Arc<ScenarioSpace>) -> Result<Vec<RandomVariable>> {
        self.parts.iter().map(|p| RandomVariable::new(space.clone(), p.clone())).collect()
    }
}

/// Pairs `(coefficients in a, coefficients in b)` spanning the intersection
/// of `span(a)` and `span(b)`.
fn intersect(a: &[Vec<f64>], b: &[Vec<f64>], n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (ka, kb) = (a.len(), b.len());
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|w| a.iter().map(|v| v[w]).chain(b.iter().map(|v| -v[w])).collect())
        .collect();
    null_space(&rows, ka + kb).into_iter().map(|v| (v[..ka].to_vec(), v[ka..].to_vec())).collect()
}

fn combine(basis: &[Vec<f64>], c: &[f64], n: usize) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for (ci, b) in c.iter().zip(basis) {
        z.iter_mut().zip(b).for_each(|(a, v)| *a += ci * v);
    }
    z
}

/// Result of the shared-security check.
#[derive(Debug, Clone)]
pub struct StarCheck {
    pub report: Report,
    /// Pairs of agents whose shared securities carry a non-zero price.
    pub edges: Vec<(usize, usize)>,
}

/// Checks that prices agree on every pairwise intersection of security
/// spaces and that the graph linking agents with a priced shared security is
/// connected.
pub fn validate_star(s: &AgentSystem) -> StarCheck {
    let n = s.space.len();
    let mut report = Report::new();
    let mut edges = Vec::new();
    let mut uf = UnionFind::new(s.len());
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            let (mi, mj) = (s.regimes[i].market(), s.regimes[j].market());
            let shared = intersect(mi.basis(), mj.basis(), n);
            let mut worst: f64 = 0.0;
            let mut priced = false;
            for (a, b) in &shared {
                let (pi, pj) = (mi.price_of_coeffs(a), mj.price_of_coeffs(b));
                worst = worst.max((pi - pj).abs());
                if pi.abs() > PRICE_TOL {
                    priced = true;
                }
            }
            let scale = 1.0 + mi.prices().iter().chain(mj.prices()).fold(0.0f64, |m, p| m.max(p.abs()));
            report.push_tol(
                &format!("star.prices({i},{j})"),
                worst <= PRICE_TOL * scale,
                Some(worst),
                PRICE_TOL * scale,
                format!("{} shared security direction(s)", shared.len()),
            );
            if priced {
                edges.push((i, j));
                uf.union(i, j);
            }
        }
    }
    let connected = (1..s.len()).all(|i| uf.find(i) == uf.find(0));
    report.push("star.connected", connected, Some(edges.len() as f64), "agents linked by priced shared securities");
    StarCheck { report, edges }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let p = self.0[i];
        if p == i {
            return i;
        }
        let r = self.find(p);
        self.0[i] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Outcome of the no-scalable-arbitrage check.
#[derive(Debug, Clone, PartialEq)]
pub struct NsaCheck {
    /// Dimension of the set of price vectors of zero-sum security allocations.
    pub dim: usize,
    pub agents: usize,
    /// `dim < agents`, equivalently the market price of zero is zero.
    pub holds: bool,
    /// Whether the cross-check LP `inf sum price_i(N_i)` over zero-sum
    /// allocations was unbounded.
    pub lp_unbounded: bool,
}

impl NsaCheck {
    pub fn consistent(&self) -> bool {
        self.holds != self.lp_unbounded
    }
}

/// No scalable arbitrage: whether zero-sum reshuffling of securities can be
/// sold at a profit.
pub fn nsa_check(s: &AgentSystem) -> Result<NsaCheck> {
    let n = s.space.len();
    let blocks: Vec<(usize, usize)> = s
        .regimes
        .iter()
        .scan(0, |off, r| {
            let b = (*off, r.market().dim());
            *off += r.market().dim();
            Some(b)
        })
        .collect();
    let total: usize = blocks.iter().map(|b| b.1).sum();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|w| s.regimes.iter().flat_map(|r| r.market().basis().iter().map(move |b| b[w])).collect())
        .collect();
    let kernel = null_space(&rows, total);
    let vectors: Vec<Vec<f64>> = kernel
        .iter()
        .map(|v| {
            s.regimes
                .iter()
                .zip(&blocks)
                .map(|(r, &(off, k))| r.market().price_of_coeffs(&v[off..off + k]))
                .collect()
        })
        .collect();
    let dim = linprog::rank(&vectors, s.len());

    let mut m = LpModel::new();
    let mut vars = Vec::new();
    for r in &s.regimes {
        for &p in r.market().prices() {
            vars.push(m.free_var(p));
        }
    }
    for row in &rows {
        m.row(vars.iter().zip(row).map(|(&j, &a)| (j, a)).collect(), Relation::Eq, 0.0);
    }
    let sol = m.build(Sense::Minimize).solve()?;
    Ok(NsaCheck { dim, agents: s.len(), holds: dim < s.len(), lp_unbounded: sol.status == LpStatus::Unbounded })
}

/// Optimal pooled risk together with the allocation and price that attain it.
#[derive(Debug, Clone)]
pub struct LambdaSolution {
    pub value: f64,
    pub allocation: Allocation,
    /// Security bought by each agent.
    pub securities: Vec<Vec<f64>>,
    /// `sum_i securities[i]`, priced at `value`.
    pub payoff: Vec<f64>,
    /// Per-scenario weights of a subgradient of the market risk measure.
    pub subgradient: Vec<f64>,
}

impl LambdaSolution {
    pub fn subgradient_functional(&self, space: &Arc<ScenarioSpace>) -> Result<Functional> {
        Functional::from_weights(space.clone(), &self.subgradient)
    }
}

struct JointModel {
    model: LpModel,
    parts: Vec<Vec<(usize, usize)>>,
    coeffs: Vec<Vec<usize>>,
    aggregate: Vec<usize>,
}

/// Builds the joint program: every agent chooses a part and a security
/// such that part minus security is acceptable, parts sum to `x`.
fn joint_model(s: &AgentSystem, x: &[f64], price_objective: bool) -> Result<JointModel> {
    let mut model = LpModel::new();
    let probs = s.space.probs();
    let mut parts = Vec::new();
    let mut coeffs = Vec::new();
    for r in &s.regimes {
        let support = r.support().indices();
        let xs: Vec<(usize, usize)> = support.iter().map(|&w| (w, model.free_var(0.0))).collect();
        let cs: Vec<usize> = r
            .market()
            .prices()
            .iter()
            .map(|&p| model.free_var(if price_objective { p } else { 0.0 }))
            .collect();
        let y: Vec<Affine> = xs
            .iter()
            .map(|&(w, xv)| {
                cs.iter()
                    .zip(r.market().basis())
                    .fold(Affine::constant(0.0).plus(xv, 1.0), |e, (&c, b)| e.plus(c, -b[w]))
            })
            .collect();
        r.acceptance().encode(&mut model, probs, &support, &y)?;
        parts.push(xs);
        coeffs.push(cs);
    }
    let mut aggregate = Vec::with_capacity(x.len());
    for (w, &xw) in x.iter().enumerate() {
        let terms: Vec<(usize, f64)> =
            parts.iter().flat_map(|p| p.iter().filter(|(pw, _)| *pw == w).map(|&(_, v)| (v, 1.0))).collect();
        aggregate.push(model.row(terms, Relation::Eq, xw));
    }
    Ok(JointModel { model, parts, coeffs, aggregate })
}

fn require_lp(s: &AgentSystem) -> Result<()> {
    if !s.lp_representable() {
        return Err(Error::Unsupported(
            "entropic agents are handled by the law-invariant solver, not the joint linear program".into(),
        ));
    }
    Ok(())
}

/// Market risk `inf { sum_i rho_i(X_i) : sum_i X_i = X }` by one linear
/// program. `None` when `X` is outside the domain (value `+inf`).
pub fn lambda(s: &AgentSystem, x: &RandomVariable) -> Result<Option<LambdaSolution>> {
    same_space(&s.space, x.space())?;
    lambda_raw(s, x.values())
}

pub fn lambda_raw(s: &AgentSystem, x: &[f64]) -> Result<Option<LambdaSolution>> {
    require_lp(s)?;
    dim_check("loss", x.len(), s.space.len())?;
    let jm = joint_model(s, x, true)?;
    let sol = jm.model.build(Sense::Minimize).solve()?;
    match sol.status {
        LpStatus::Infeasible => return Ok(None),
        LpStatus::Unbounded => {
            return Err(Error::Contract(
                "pooled risk is -infinity; the no-scalable-arbitrage precondition fails".into(),
            ))
        }
        LpStatus::Optimal => {}
    }
    let n = x.len();
    let mut parts = Vec::new();
    let mut securities = Vec::new();
    for (i, r) in s.regimes.iter().enumerate() {
        let mut p = vec![0.0; n];
        for &(w, v) in &jm.parts[i] {
            p[w] = sol.x[v];
        }
        parts.push(p);
        let c: Vec<f64> = jm.coeffs[i].iter().map(|&j| sol.x[j]).collect();
        securities.push(r.market().payoff(&c));
    }
    let payoff = Allocation::new(securities.clone()).total();
    let subgradient = jm.aggregate.iter().map(|&r| sol.duals[r]).collect();
    Ok(Some(LambdaSolution { value: sol.objective, allocation: Allocation::new(parts), securities, payoff, subgradient }))
}

/// Market risk through the pooled security space priced by [`AgentSystem::price`]:
/// `inf { price(Z) : Z pooled, X - Z in the sum of acceptance sets }`.
/// Agrees with [`lambda`] when no scalable arbitrage exists.
pub fn lambda_pooled(s: &AgentSystem, x: &[f64]) -> Result<Extended> {
    require_lp(s)?;
    let basis = s.pooled_basis();
    let prices: Vec<f64> = basis.iter().map(|b| s.price(b)).collect::<Result<_>>()?;
    let n = x.len();
    let mut m = LpModel::new();
    let zc: Vec<usize> = prices.iter().map(|&p| m.free_var(p)).collect();
    let probs = s.space.probs();
    let mut sums: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for r in &s.regimes {
        let support = r.support().indices();
        let ys: Vec<usize> = support.iter().map(|_| m.free_var(0.0)).collect();
        let y: Vec<Affine> = ys.iter().map(|&j| Affine::constant(0.0).plus(j, 1.0)).collect();
        r.acceptance().encode(&mut m, probs, &support, &y)?;
        for (&w, &j) in support.iter().zip(&ys) {
            sums[w].push((j, 1.0));
        }
    }
    for w in 0..n {
        let mut terms = sums[w].clone();
        terms.extend(zc.iter().zip(&basis).map(|(&j, b)| (j, b[w])));
        m.row(terms, Relation::Eq, x[w]);
    }
    let sol = m.build(Sense::Minimize).solve()?;
    match sol.status {
        LpStatus::Optimal => Ok(Extended::Finite(sol.objective)),
        LpStatus::Infeasible => Ok(Extended::Infinite),
        LpStatus::Unbounded => Err(Error::Contract("pooled risk is -infinity; the no-scalable-arbitrage precondition fails".into())),
    }
}

/// Splits a pooled security into securities eligible for each agent, linearly.
///
/// Agent by agent, the part of the agent's space orthogonal to everything
/// already collected is added with an orthonormal basis. When that does
/// not exhaust the pooled space (it can fail to when security spaces are
/// skewed against each other), the remaining directions are completed
/// greedily from the agents' own bases. The pooled security is expanded in
/// the collected basis and each agent receives its own terms.
pub fn security_selection(s: &AgentSystem, z: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = s.space.len();
    dim_check("security", z.len(), n)?;
    let sel = Selection::build(s);
    let scale = 1.0 + z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let vecs: Vec<Vec<f64>> = sel.vectors.iter().map(|(_, v)| v.clone()).collect();
    let c = coefficients_in_span(&vecs, z, 1e-9 * scale)
        .ok_or_else(|| Error::Domain("payoff is not in the pooled security space".into()))?;
    let mut out = vec![vec![0.0; n]; s.len()];
    for ((agent, v), ck) in sel.vectors.iter().zip(&c) {
        out[*agent].iter_mut().zip(v).for_each(|(a, b)| *a += ck * b);
    }
    Ok(out)
}

struct Selection {
    vectors: Vec<(usize, Vec<f64>)>,
}

impl Selection {
    fn build(s: &AgentSystem) -> Self {
        let n = s.space.len();
        let mut vectors: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, r) in s.regimes.iter().enumerate() {
            let basis = r.market().basis();
            let rows: Vec<Vec<f64>> =
                vectors.iter().map(|(_, g)| basis.iter().map(|b| linprog::dot(g, b)).collect()).collect();
            let coeff_null = null_space(&rows, basis.len());
            let fresh: Vec<Vec<f64>> = coeff_null.iter().map(|c| combine(basis, c, n)).collect();
            for v in orthonormalize(&fresh) {
                vectors.push((i, v));
            }
        }
        let target = s.pooled_basis().len();
        if vectors.len() < target {
            let mut ortho = orthonormalize(&vectors.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>());
            for (i, r) in s.regimes.iter().enumerate() {
                for b in r.market().basis() {
                    let mut cand = ortho.clone();
                    cand.push(b.clone());
                    let q = orthonormalize(&cand);
                    if q.len() > ortho.len() {
                        ortho = q;
                        vectors.push((i, b.clone()));
                    }
                }
            }
        }
        Self { vectors }
    }
}

/// Turns an optimal pooled payoff into a Pareto optimal allocation:
/// finds acceptable `Y_i` with `sum Y_i = X - Z` and hands each agent
/// `Y_i` plus its share of `Z`.
pub fn pareto_from_payoff(s: &AgentSystem, x: &[f64], z: &[f64], tol: f64) -> Result<Allocation> {
    require_lp(s)?;
    let Some(opt) = lambda_raw(s, x)? else {
        return Err(Error::Domain("loss is outside the domain of the pooled risk".into()));
    };
    let pz = s.price(z)?;
    if (pz - opt.value).abs() > tol * (1.0 + opt.value.abs()) {
        return Err(Error::Contract(format!("payoff is priced at {pz}, the optimum is {}", opt.value)));
    }
    let rest: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    let mut m = LpModel::new();
    let probs = s.space.probs();
    let mut parts = Vec::new();
    let mut sums: Vec<Vec<(usize, f64)>> = vec![Vec::new(); x.len()];
    for r in &s.regimes {
        let support = r.support().indices();
        let ys: Vec<usize> = support.iter().map(|_| m.free_var(0.0)).collect();
        let y: Vec<Affine> = ys.iter().map(|&j| Affine::constant(0.0).plus(j, 1.0)).collect();
        r.acceptance().encode(&mut m, probs, &support, &y)?;
        for (&w, &j) in support.iter().zip(&ys) {
            sums[w].push((j, 1.0));
        }
        parts.push(support.into_iter().zip(ys).collect::<Vec<_>>());
    }
    for (w, terms) in sums.into_iter().enumerate() {
        m.row(terms, Relation::Eq, rest[w]);
    }
    let sol = m.build(Sense::Minimize).solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Contract("X - Z is not in the sum of the acceptance sets".into()));
    }
    let shares = security_selection(s, z)?;
    let out = parts
        .iter()
        .zip(shares)
        .map(|(p, mut share)| {
            for &(w, j) in p {
                share[w] += sol.x[j];
            }
            share
        })
        .collect();
    Ok(Allocation::new(out))
}

/// Moves `t * z` from agent `from` to agent `to`. `z` must be eligible for both.
pub fn shift_security(s: &AgentSystem, alloc: &Allocation, from: usize, to: usize, z: &[f64], t: f64) -> Result<Allocation> {
    for &i in &[from, to] {
        if s.regimes[i].market().coefficients(z, 1e-9).is_none() {
            return Err(Error::Domain(format!("payoff is not eligible for agent {i}")));
        }
    }
    let mut parts = alloc.parts.clone();
    parts[to].iter_mut().zip(z).for_each(|(a, b)| *a += t * b);
    parts[from].iter_mut().zip(z).for_each(|(a, b)| *a -= t * b);
    Ok(Allocation::new(parts))
}

/// A security eligible for both agents and priced at one by both.
pub fn shared_unit(s: &AgentSystem, i: usize, j: usize) -> Option<Vec<f64>> {
    let (mi, mj) = (s.regimes[i].market(), s.regimes[j].market());
    intersect(mi.basis(), mj.basis(), s.space.len())
        .into_iter()
        .map(|(a, _)| (mi.price_of_coeffs(&a), combine(mi.basis(), &a, s.space.len())))
        .filter(|(p, _)| p.abs() > PRICE_TOL)
        .max_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .map(|(p, z)| z.iter().map(|v| v / p).collect())
}

/// A security eligible for every agent with non-zero price, scaled to price one.
pub fn common_unit(s: &AgentSystem) -> Option<Vec<f64>> {
    let n = s.space.len();
    let first = s.regimes[0].market();
    let mut basis: Vec<Vec<f64>> = first.basis().to_vec();
    for r in &s.regimes[1..] {
        let shared = intersect(&basis, r.market().basis(), n);
        basis = orthonormalize(&shared.iter().map(|(a, _)| combine(&basis, a, n)).collect::<Vec<_>>());
        if basis.is_empty() {
            return None;
        }
    }
    basis
        .into_iter()
        .filter_map(|z| first.price(&z).ok().map(|p| (p, z)))
        .filter(|(p, _)| p.abs() > PRICE_TOL)
        .max_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .map(|(p, z)| z.iter().map(|v| v / p).collect())
}

/// Recession cone `{U : phi_j(U) <= 0}` and lineality space of an agent's
/// acceptance set, both inside the agent's support.
#[derive(Debug, Clone, PartialEq)]
pub struct RecessionData {
    /// Per-scenario weights of the defining functionals (polyhedral case).
    pub cone: Vec<Vec<f64>>,
    /// Orthonormal basis of the lineality space, embedded in the full space.
    pub lineality: Vec<Vec<f64>>,
}

pub fn recession_data(r: &RiskMeasurementRegime) -> RecessionData {
    let n = r.space().len();
    let support = r.support().indices();
    let probs = r.space().probs();
    let embed = |v: &[f64]| {
        let mut full = vec![0.0; n];
        for (&w, a) in support.iter().zip(v) {
            full[w] = *a;
        }
        full
    };
    match r.acceptance() {
        AcceptanceSet::Polyhedral(p) => {
            let cone: Vec<Vec<f64>> = p.functionals().iter().map(|f| f.weights()).collect();
            let rows: Vec<Vec<f64>> = cone.iter().map(|w| support.iter().map(|&i| w[i]).collect()).collect();
            let lineality = null_space(&rows, support.len()).iter().map(|v| embed(v)).collect();
            RecessionData { cone, lineality }
        }
        AcceptanceSet::LawInvariant(crate::regime::LawInvariantKind::Expectation) => {
            let w: Vec<f64> = probs.to_vec();
            let lineality = null_space(&[w.clone()], n);
            RecessionData { cone: vec![w], lineality }
        }
        AcceptanceSet::LawInvariant(_) => RecessionData { cone: Vec::new(), lineality: Vec::new() },
    }
}

/// Whether `u` is a recession direction of the sum of the acceptance sets.
pub fn is_pooled_recession_direction(s: &AgentSystem, u: &[f64]) -> Result<bool> {
    require_lp(s)?;
    let mut m = LpModel::new();
    let probs = s.space.probs();
    let mut sums: Vec<Vec<(usize, f64)>> = vec![Vec::new(); u.len()];
    for r in &s.regimes {
        let support = r.support().indices();
        let ys: Vec<usize> = support.iter().map(|_| m.free_var(0.0)).collect();
        let y: Vec<Affine> = ys.iter().map(|&j| Affine::constant(0.0).plus(j, 1.0)).collect();
        let homogeneous = match r.acceptance() {
            AcceptanceSet::Polyhedral(p) => AcceptanceSet::Polyhedral(
                crate::regime::PolyhedralAcceptanceSet::new(p.functionals().to_vec(), vec![0.0; p.bounds().len()])?,
            ),
            other => other.clone(),
        };
        homogeneous.encode(&mut m, probs, &support, &y)?;
        for (&w, &j) in support.iter().zip(&ys) {
            sums[w].push((j, 1.0));
        }
    }
    for (w, terms) in sums.into_iter().enumerate() {
        m.row(terms, Relation::Eq, u[w]);
    }
    Ok(m.build(Sense::Minimize).solve()?.status == LpStatus::Optimal)
}

/// Whether `X - value * U` lies in the sum of the acceptance sets plus the
/// zero-price pooled securities, for a priced-at-one common security `U`.
pub fn level_set_check(s: &AgentSystem, x: &[f64], value: f64, u: &[f64]) -> Result<bool> {
    require_lp(s)?;
    let basis = s.pooled_basis();
    let prices: Vec<f64> = basis.iter().map(|b| s.price(b)).collect::<Result<_>>()?;
    let mut m = LpModel::new();
    let zc: Vec<usize> = basis.iter().map(|_| m.free_var(0.0)).collect();
    m.row(zc.iter().zip(&prices).map(|(&j, &p)| (j, p)).collect(), Relation::Eq, 0.0);
    let probs = s.space.probs();
    let mut sums: Vec<Vec<(usize, f64)>> = vec![Vec::new(); x.len()];
    for r in &s.regimes {
        let support = r.support().indices();
        let ys: Vec<usize> = support.iter().map(|_| m.free_var(0.0)).collect();
        let y: Vec<Affine> = ys.iter().map(|&j| Affine::constant(0.0).plus(j, 1.0)).collect();
        r.acceptance().encode(&mut m, probs, &support, &y)?;
        for (&w, &j) in support.iter().zip(&ys) {
            sums[w].push((j, 1.0));
        }
    }
    for w in 0..x.len() {
        let mut terms = sums[w].clone();
        terms.extend(zc.iter().zip(&basis).map(|(&j, b)| (j, b[w])));
        m.row(terms, Relation::Eq, x[w] - value * u[w]);
    }
    Ok(m.build(Sense::Minimize).solve()?.status == LpStatus::Optimal)
}

/// Checks a candidate common pricing functional: it must price every
/// agent's securities correctly and have a finite support function on
/// every acceptance set.
pub fn check_sup(s: &AgentSystem, phi: &Functional) -> Result<Report> {
    let mut rep = Report::new();
    for (i, r) in s.regimes.iter().enumerate() {
        let mismatch = r.price_mismatch(phi);
        rep.push_tol(&format!("agent{i}.prices"), mismatch <= 1e-9, Some(mismatch), 1e-9, "candidate prices the securities");
        let sigma = r.support_function(phi)?;
        rep.push(
            &format!("agent{i}.support_function"),
            sigma.is_finite(),
            sigma.finite(),
            "supremum of the candidate over the acceptance set",
        );
    }
    Ok(rep)
}
