//! Risk measurement regimes: an acceptance set, a space of eligible
//! securities with a linear price, and the support ideal they live in. The
//! induced risk measure is the cheapest price of a security that makes the
//! residual loss acceptable.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_check, Error, Result};
use crate::linprog::{
    self, add_combination, coefficients_in_span, null_space, Affine, LpModel, LpStatus, Relation, Sense,
};
use crate::report::Report;
use crate::scenario::{same_space, Extended, Functional, RandomVariable, ScenarioSpace, SupportMask};

/// Number of random loss vectors probed by the no-arbitrage check, besides zero.
pub const NO_ARBITRAGE_PROBES: usize = 8;

/// Finite intersection of half-spaces `{X : phi_j(X) <= beta_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralAcceptanceSet {
    functionals: Vec<Functional>,
    bounds: Vec<f64>,
}

impl PolyhedralAcceptanceSet {
    pub fn new(functionals: Vec<Functional>, bounds: Vec<f64>) -> Result<Self> {
        dim_check("acceptance bounds", bounds.len(), functionals.len())?;
        if functionals.is_empty() {
            return Err(Error::Invalid("polyhedral acceptance set needs at least one functional".into()));
        }
        let space = functionals[0].space().clone();
        for f in &functionals[1..] {
            same_space(&space, f.space())?;
        }
        if bounds.iter().any(|b| !b.is_finite()) {
            return Err(Error::Invalid("acceptance bound is not finite".into()));
        }
        Ok(Self { functionals, bounds })
    }

    /// `{X : X(omega) <= k(omega)}` on the scenarios in `idx`.
    pub fn pointwise_upper(space: &Arc<ScenarioSpace>, idx: &[usize], k: &[f64]) -> Result<Self> {
        dim_check("pointwise bounds", k.len(), idx.len())?;
        let fs = idx.iter().map(|&i| Functional::point(space.clone(), i)).collect();
        Self::new(fs, k.to_vec())
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        self.functionals[0].space()
    }

    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.functionals.iter().zip(&self.bounds).all(|(f, b)| f.apply_raw(x) <= b + tol)
    }

    /// Monotonicity certificate: every density is non-negative.
    pub fn monotone(&self) -> bool {
        self.functionals.iter().all(|f| f.is_positive(0.0))
    }
}

/// Acceptance sets `{X : xi(X) <= 0}` for a law-invariant base functional `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawInvariantKind {
    /// `(1/alpha) log E[exp(alpha X)]`
    Entropic { alpha: f64 },
    /// Average value at risk at level `beta`.
    AVaR { beta: f64 },
    Expectation,
}

impl LawInvariantKind {
    pub fn entropic(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Invalid(format!("entropic risk aversion {alpha} must be positive")));
        }
        Ok(Self::Entropic { alpha })
    }

    pub fn avar(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Invalid(format!("AVaR level {beta} must lie in (0, 1)")));
        }
        Ok(Self::AVaR { beta })
    }

    pub fn value(&self, probs: &[f64], x: &[f64]) -> f64 {
        match *self {
            Self::Entropic { alpha } => entropic(alpha, probs, x),
            Self::AVaR { beta } => avar(beta, probs, x),
            Self::Expectation => probs.iter().zip(x).map(|(p, v)| p * v).sum(),
        }
    }

    /// Support function of the acceptance set at the functional with
    /// per-scenario weights `w` (so `phi(X) = sum w X`).
    pub fn support_function(&self, probs: &[f64], w: &[f64]) -> Extended {
        if w.iter().any(|&v| v < -1e-12) {
            return Extended::Infinite;
        }
        let mass: f64 = w.iter().map(|v| v.max(0.0)).sum();
        if mass <= 1e-300 {
            return Extended::Finite(0.0);
        }
        let q: Vec<f64> = w.iter().zip(probs).map(|(v, p)| v.max(0.0) / (mass * p)).collect();
        match *self {
            Self::Entropic { alpha } => Extended::Finite(mass * relative_entropy(probs, &q) / alpha),
            Self::AVaR { beta } => {
                let cap = 1.0 / (1.0 - beta);
                if q.iter().all(|&v| v <= cap + 1e-9) {
                    Extended::Finite(0.0)
                } else {
                    Extended::Infinite
                }
            }
            Self::Expectation => {
                if q.iter().all(|&v| (v - 1.0).abs() <= 1e-9) {
                    Extended::Finite(0.0)
                } else {
                    Extended::Infinite
                }
            }
        }
    }

    /// Whether `u` is a recession direction of the acceptance set.
    pub fn is_recession_direction(&self, probs: &[f64], u: &[f64], tol: f64) -> bool {
        match *self {
            Self::Entropic { .. } => u.iter().all(|&v| v <= tol),
            Self::AVaR { beta } => avar(beta, probs, u) <= tol,
            Self::Expectation => probs.iter().zip(u).map(|(p, v)| p * v).sum::<f64>() <= tol,
        }
    }

    pub fn lp_representable(&self) -> bool {
        !matches!(self, Self::Entropic { .. })
    }
}

/// Entropic risk `(1/alpha) log E[exp(alpha X)]` by log-sum-exp.
pub fn entropic(alpha: f64, probs: &[f64], x: &[f64]) -> f64 {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let s: f64 = probs.iter().zip(x).map(|(p, v)| p * (alpha * (v - m)).exp()).sum();
    m + s.ln() / alpha
}

/// Gibbs density `exp(alpha X) / E[exp(alpha X)]`, the gradient of the entropic risk.
pub fn entropic_density(alpha: f64, probs: &[f64], x: &[f64]) -> Vec<f64> {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = x.iter().map(|v| (alpha * (v - m)).exp()).collect();
    let z: f64 = probs.iter().zip(&e).map(|(p, v)| p * v).sum();
    e.iter().map(|v| v / z).collect()
}

/// Average value at risk: `sup E[q X]` over densities with `0 <= q <= 1/(1-beta)`.
pub fn avar(beta: f64, probs: &[f64], x: &[f64]) -> f64 {
    let q = avar_density(beta, probs, x);
    probs.iter().zip(&q).zip(x).map(|((p, d), v)| p * d * v).sum()
}

/// A maximising density for [`avar`], filling the largest losses first.
pub fn avar_density(beta: f64, probs: &[f64], x: &[f64]) -> Vec<f64> {
    let cap = 1.0 / (1.0 - beta);
    let (_, order) = crate::scenario::sort_descending(x);
    let mut q = vec![0.0; x.len()];
    let mut left = 1.0;
    for i in order {
        if left <= 0.0 {
            break;
        }
        let take = (probs[i] * cap).min(left);
        q[i] = take / probs[i];
        left -= take;
    }
    q
}

/// `E[q log q]` with `0 log 0 = 0`.
pub fn relative_entropy(probs: &[f64], q: &[f64]) -> f64 {
    probs.iter().zip(q).map(|(p, &v)| if v > 0.0 { p * v * v.ln() } else { 0.0 }).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum AcceptanceSet {
    Polyhedral(PolyhedralAcceptanceSet),
    LawInvariant(LawInvariantKind),
}

impl AcceptanceSet {
    pub fn lp_representable(&self) -> bool {
        match self {
            Self::Polyhedral(_) => true,
            Self::LawInvariant(k) => k.lp_representable(),
        }
    }

    pub fn contains(&self, probs: &[f64], y: &[f64], tol: f64) -> bool {
        match self {
            Self::Polyhedral(p) => p.contains(y, tol),
            Self::LawInvariant(k) => k.value(probs, y) <= tol,
        }
    }

    /// Adds rows forcing the affine loss `y` (one entry per scenario in
    /// `support`) into the acceptance set. Auxiliary variables are created
    /// as needed. Returns the indices of the added rows.
    pub(crate) fn encode(&self, model: &mut LpModel, probs: &[f64], support: &[usize], y: &[Affine]) -> Result<Vec<usize>> {
        let mut rows = Vec::new();
        match self {
            Self::Polyhedral(p) => {
                for (f, b) in p.functionals().iter().zip(p.bounds()) {
                    let w: Vec<f64> = support.iter().map(|&i| f.density()[i] * probs[i]).collect();
                    rows.push(add_combination(model, &w, y, Relation::Le, *b));
                }
            }
            Self::LawInvariant(LawInvariantKind::Expectation) => {
                let w: Vec<f64> = support.iter().map(|&i| probs[i]).collect();
                rows.push(add_combination(model, &w, y, Relation::Le, 0.0));
            }
            Self::LawInvariant(LawInvariantKind::AVaR { beta }) => {
                // AVaR(Y) = min_t t + E[(Y - t)^+] / (1 - beta)
                let t = model.free_var(0.0);
                let mut top = vec![(t, 1.0)];
                for (k, &i) in support.iter().enumerate() {
                    let u = model.var(0.0, 0.0, f64::INFINITY);
                    let mut terms = vec![(u, 1.0), (t, 1.0)];
                    terms.extend(y[k].terms.iter().map(|&(j, a)| (j, -a)));
                    rows.push(model.row(terms, Relation::Ge, y[k].constant));
                    top.push((u, probs[i] / (1.0 - beta)));
                }
                rows.push(model.row(top, Relation::Le, 0.0));
            }
            Self::LawInvariant(LawInvariantKind::Entropic { .. }) => {
                return Err(Error::Unsupported("entropic acceptance sets are not polyhedral".into()));
            }
        }
        Ok(rows)
    }
}

/// Eligible securities: a basis of a subspace and the price of each basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityMarket {
    space: Arc<ScenarioSpace>,
    basis: Vec<Vec<f64>>,
    prices: Vec<f64>,
}

impl SecurityMarket {
    pub fn new(space: Arc<ScenarioSpace>, basis: Vec<Vec<f64>>, prices: Vec<f64>) -> Result<Self> {
        dim_check("security prices", prices.len(), basis.len())?;
        if basis.is_empty() {
            return Err(Error::Invalid("security space needs at least one basis vector".into()));
        }
        for b in &basis {
            dim_check("security", b.len(), space.len())?;
        }
        if basis.iter().flatten().chain(&prices).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("security data has a non-finite entry".into()));
        }
        if linprog::rank(&basis, space.len()) < basis.len() {
            return Err(Error::Invalid("security basis is linearly dependent".into()));
        }
        Ok(Self { space, basis, prices })
    }

    /// Riskless cash `1` at price `p`.
    pub fn cash(space: Arc<ScenarioSpace>, price: f64) -> Result<Self> {
        let n = space.len();
        Self::new(space, vec![vec![1.0; n]], vec![price])
    }

    /// Basis vectors priced by `scale * E_Q[.]` for a density `q`.
    pub fn priced_by(space: Arc<ScenarioSpace>, basis: Vec<Vec<f64>>, scale: f64, q: &[f64]) -> Result<Self> {
        dim_check("pricing density", q.len(), space.len())?;
        let prices = basis
            .iter()
            .map(|b| scale * space.probs().iter().zip(q).zip(b).map(|((p, d), v)| p * d * v).sum::<f64>())
            .collect();
        Self::new(space, basis, prices)
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        &self.space
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Payoff `sum_k c_k b_k`.
    pub fn payoff(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.space.len()];
        for (c, b) in coeffs.iter().zip(&self.basis) {
            z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += c * bi);
        }
        z
    }

    pub fn price_of_coeffs(&self, coeffs: &[f64]) -> f64 {
        linprog::dot(coeffs, &self.prices)
    }

    /// Coefficients of `z` in the basis, if `z` is eligible.
    pub fn coefficients(&self, z: &[f64], tol: f64) -> Option<Vec<f64>> {
        coefficients_in_span(&self.basis, z, tol)
    }

    /// Price of an eligible payoff.
    pub fn price(&self, z: &[f64]) -> Result<f64> {
        let scale = 1.0 + z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.coefficients(z, 1e-9 * scale)
            .map(|c| self.price_of_coeffs(&c))
            .ok_or_else(|| Error::Domain("payoff is not an eligible security".into()))
    }

    /// Coefficient vectors spanning the zero-price securities.
    pub fn kernel_coeffs(&self) -> Vec<Vec<f64>> {
        null_space(&[self.prices.clone()], self.dim())
    }

    /// Whether the riskless payoff `1` (restricted to `support`) is eligible.
    pub fn cash_coeffs(&self, support: &SupportMask) -> Option<Vec<f64>> {
        let one: Vec<f64> = support.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        self.coefficients(&one, 1e-9)
    }

    /// A non-negative eligible payoff priced at one, preferring cash. The
    /// returned pair is `(coefficients, payoff)`.
    pub fn unit(&self, support: &SupportMask) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        if let Some(c) = self.cash_coeffs(support) {
            let p = self.price_of_coeffs(&c);
            if p > 1e-12 {
                let c: Vec<f64> = c.iter().map(|v| v / p).collect();
                let z = self.payoff(&c);
                return Ok(Some((c, z)));
            }
        }
        // maximise the smallest coordinate on the support of a priced-at-one payoff
        let mut m = LpModel::new();
        let cs: Vec<usize> = (0..self.dim()).map(|_| m.free_var(0.0)).collect();
        let t = m.var(1.0, f64::NEG_INFINITY, 1e6);
        let price: Vec<(usize, f64)> = cs.iter().zip(&self.prices).map(|(&j, &p)| (j, p)).collect();
        m.row(price, Relation::Eq, 1.0);
        for i in support.indices() {
            let terms: Vec<(usize, f64)> = cs.iter().zip(&self.basis).map(|(&j, b)| (j, b[i])).collect();
            m.row(terms.clone(), Relation::Ge, 0.0);
            let mut with_t = terms;
            with_t.push((t, -1.0));
            m.row(with_t, Relation::Ge, 0.0);
        }
        let sol = m.build(Sense::Maximize).solve()?;
        match sol.status {
            LpStatus::Optimal => {
                let c: Vec<f64> = cs.iter().map(|&j| sol.x[j]).collect();
                let z = self.payoff(&c);
                Ok(Some((c, z)))
            }
            _ => Ok(None),
        }
    }
}

/// Acceptance set, security market and support ideal of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMeasurementRegime {
    acceptance: AcceptanceSet,
    market: SecurityMarket,
    support: SupportMask,
}

/// Risk value with an explicit `-inf`, used internally before it is turned
/// into an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Signed {
    Finite(f64),
    PlusInf,
    MinusInf,
}

impl RiskMeasurementRegime {
    pub fn new(acceptance: AcceptanceSet, market: SecurityMarket, support: SupportMask) -> Result<Self> {
        same_space(market.space(), support.space())?;
        match &acceptance {
            AcceptanceSet::Polyhedral(p) => same_space(p.space(), support.space())?,
            AcceptanceSet::LawInvariant(_) => {
                if !support.is_full() {
                    return Err(Error::Unsupported("law-invariant acceptance sets need the full support".into()));
                }
            }
        }
        Ok(Self { acceptance, market, support })
    }

    /// Law-invariant acceptance set with full support.
    pub fn law_invariant(kind: LawInvariantKind, market: SecurityMarket) -> Result<Self> {
        let support = SupportMask::full(market.space().clone());
        Self::new(AcceptanceSet::LawInvariant(kind), market, support)
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        self.market.space()
    }

    pub fn acceptance(&self) -> &AcceptanceSet {
        &self.acceptance
    }

    pub fn market(&self) -> &SecurityMarket {
        &self.market
    }

    pub fn support(&self) -> &SupportMask {
        &self.support
    }

    fn check_domain(&self, x: &[f64]) -> Result<()> {
        dim_check("loss", x.len(), self.space().len())?;
        if !self.support.admits(x, 0.0) {
            return Err(Error::Domain("loss is non-zero outside the agent's support".into()));
        }
        Ok(())
    }

    /// `inf { price(Z) : Z eligible, X - Z acceptable }`.
    pub fn rho(&self, x: &RandomVariable) -> Result<Extended> {
        same_space(self.space(), x.space())?;
        self.rho_raw(x.values())
    }

    pub fn rho_raw(&self, x: &[f64]) -> Result<Extended> {
        match self.rho_signed(x)? {
            Signed::Finite(v) => Ok(Extended::Finite(v)),
            Signed::PlusInf => Ok(Extended::Infinite),
            Signed::MinusInf => Err(Error::Contract("risk is -infinity: the regime admits arbitrage".into())),
        }
    }

    pub(crate) fn rho_signed(&self, x: &[f64]) -> Result<Signed> {
        self.check_domain(x)?;
        if self.acceptance.lp_representable() {
            return self.rho_lp(x).map(|(v, _)| v);
        }
        let AcceptanceSet::LawInvariant(kind) = self.acceptance else { unreachable!() };
        let probs = self.space().probs().to_vec();
        let xi = move |y: &[f64]| kind.value(&probs, y);
        Ok(securitized_min(&xi, x, &self.market, &self.support)?.value)
    }

    /// Optimal security coefficients together with the risk, for LP-representable regimes.
    pub(crate) fn rho_lp(&self, x: &[f64]) -> Result<(Signed, Option<Vec<f64>>)> {
        let mut m = LpModel::new();
        let cs: Vec<usize> = self.market.prices().iter().map(|&p| m.free_var(p)).collect();
        let support = self.support.indices();
        let y: Vec<Affine> = support
            .iter()
            .map(|&i| {
                cs.iter()
                    .zip(self.market.basis())
                    .fold(Affine::constant(x[i]), |e, (&j, b)| e.plus(j, -b[i]))
            })
            .collect();
        self.acceptance.encode(&mut m, self.space().probs(), &support, &y)?;
        let sol = m.build(Sense::Minimize).solve()?;
        Ok(match sol.status {
            LpStatus::Optimal => (Signed::Finite(sol.objective), Some(cs.iter().map(|&j| sol.x[j]).collect())),
            LpStatus::Infeasible => (Signed::PlusInf, None),
            LpStatus::Unbounded => (Signed::MinusInf, None),
        })
    }

    /// Optimal securitization `Z` with `rho(X) = price(Z)` and `X - Z` acceptable.
    pub fn optimal_security(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_domain(x)?;
        if self.acceptance.lp_representable() {
            return Ok(self.rho_lp(x)?.1.map(|c| self.market.payoff(&c)));
        }
        let AcceptanceSet::LawInvariant(kind) = self.acceptance else { unreachable!() };
        let probs = self.space().probs().to_vec();
        let xi = move |y: &[f64]| kind.value(&probs, y);
        let s = securitized_min(&xi, x, &self.market, &self.support)?;
        Ok(s.payoff)
    }

    /// `sup { phi(Y) : Y acceptable }` for `phi` restricted to the support.
    pub fn support_function(&self, phi: &Functional) -> Result<Extended> {
        same_space(self.space(), phi.space())?;
        let probs = self.space().probs();
        let support = self.support.indices();
        let w_full = phi.weights();
        match &self.acceptance {
            AcceptanceSet::LawInvariant(kind) if !kind.lp_representable() => {
                Ok(kind.support_function(probs, &w_full))
            }
            acc => {
                let mut m = LpModel::new();
                let ys: Vec<usize> = support.iter().map(|&i| m.free_var(w_full[i])).collect();
                let y: Vec<Affine> = ys.iter().map(|&j| Affine::constant(0.0).plus(j, 1.0)).collect();
                acc.encode(&mut m, probs, &support, &y)?;
                let sol = m.build(Sense::Maximize).solve()?;
                Ok(match sol.status {
                    LpStatus::Optimal => Extended::Finite(sol.objective),
                    LpStatus::Unbounded => Extended::Infinite,
                    LpStatus::Infeasible => {
                        return Err(Error::Inconsistent("acceptance set is empty".into()));
                    }
                })
            }
        }
    }

    /// Largest deviation `|phi(b_k) - price_k|` over the security basis.
    pub fn price_mismatch(&self, phi: &Functional) -> f64 {
        let w = phi.weights();
        self.market
            .basis()
            .iter()
            .zip(self.market.prices())
            .map(|(b, p)| {
                let v: f64 = self.support.indices().iter().map(|&i| w[i] * b[i]).sum();
                (v - p).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Convex conjugate `sup_X phi(X) - rho(X)` over the support ideal.
    pub fn conjugate(&self, phi: &Functional) -> Result<Extended> {
        let scale = 1.0 + self.market.prices().iter().fold(0.0f64, |a, p| a.max(p.abs()));
        if self.price_mismatch(phi) > 1e-9 * scale {
            return Ok(Extended::Infinite);
        }
        self.support_function(phi)
    }

    /// Sup-norm Lipschitz bound: the cheapest eligible payoff dominating the
    /// indicator of the support.
    pub fn lipschitz_bound(&self) -> Result<f64> {
        let mut m = LpModel::new();
        let cs: Vec<usize> = self.market.prices().iter().map(|&p| m.free_var(p)).collect();
        for i in self.support.indices() {
            let terms = cs.iter().zip(self.market.basis()).map(|(&j, b)| (j, b[i])).collect();
            m.row(terms, Relation::Ge, 1.0);
        }
        let sol = m.build(Sense::Minimize).solve()?;
        Ok(match sol.status {
            LpStatus::Optimal => sol.objective.max(0.0),
            _ => f64::INFINITY,
        })
    }

    pub fn is_acceptable(&self, y: &[f64], tol: f64) -> bool {
        self.support.admits(y, tol) && self.acceptance.contains(self.space().probs(), y, tol)
    }
}

/// Result of minimising the price of a securitization against a
/// cash-additive base functional.
#[derive(Debug, Clone)]
pub(crate) struct Securitized {
    pub value: Signed,
    pub payoff: Option<Vec<f64>>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const DIVERGENCE: f64 = 1e9;

/// `inf { price(Z) : xi(X - Z) <= 0 }` for a convex, monotone,
/// cash-additive `xi`. Securities are split into a priced-at-one unit and
/// zero-price directions. The unit amount solves a monotone root problem
/// and the zero-price part is found by coordinate-wise golden section.
pub(crate) fn securitized_min(
    xi: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    market: &SecurityMarket,
    support: &SupportMask,
) -> Result<Securitized> {
    let Some((_, unit)) = market.unit(support)? else {
        return Err(Error::Contract("no non-negative eligible payoff is priced at one".into()));
    };
    let kernel: Vec<Vec<f64>> = market.kernel_coeffs().iter().map(|c| market.payoff(c)).collect();
    let cash_level = {
        let lvl = unit[0];
        if unit.iter().all(|&u| (u - lvl).abs() <= 1e-12 * lvl.abs().max(1.0)) && lvl > 0.0 {
            Some(lvl)
        } else {
            None
        }
    };
    let n = x.len();
    let residual = |v: &[f64]| -> Vec<f64> {
        let mut w = x.to_vec();
        for (vj, nj) in v.iter().zip(&kernel) {
            w.iter_mut().zip(nj).for_each(|(a, b)| *a -= vj * b);
        }
        w
    };
    let amount = |v: &[f64]| -> f64 {
        let w = residual(v);
        if let Some(l) = cash_level {
            return xi(&w) / l;
        }
        unit_amount(xi, &w, &unit)
    };
    let mut v = vec![0.0; kernel.len()];
    let mut best = amount(&v);
    if !best.is_finite() && !kernel.is_empty() {
        return Err(Error::Numerical("could not find a finite starting securitization".into()));
    }
    for _sweep in 0..200 {
        let before = best;
        for j in 0..v.len() {
            let f = |t: f64| {
                let mut u = v.clone();
                u[j] = t;
                amount(&u)
            };
            let (t, val) = line_min(&f, v[j], best);
            if t.abs() > DIVERGENCE || val == f64::NEG_INFINITY {
                return Ok(Securitized { value: Signed::MinusInf, payoff: None });
            }
            if val < best {
                v[j] = t;
                best = val;
            }
        }
        if (before - best).abs() <= 1e-13 * (1.0 + best.abs()) {
            break;
        }
    }
    if !best.is_finite() {
        return Ok(Securitized { value: Signed::PlusInf, payoff: None });
    }
    let mut z = vec![0.0; n];
    z.iter_mut().zip(&unit).for_each(|(a, u)| *a = best * u);
    for (vj, nj) in v.iter().zip(&kernel) {
        z.iter_mut().zip(nj).for_each(|(a, b)| *a += vj * b);
    }
    Ok(Securitized { value: Signed::Finite(best), payoff: Some(z) })
}

/// Smallest `r` with `xi(w - r u) <= 0`, or `+inf` if none exists.
fn unit_amount(xi: &dyn Fn(&[f64]) -> f64, w: &[f64], u: &[f64]) -> f64 {
    let g = |r: f64| {
        let y: Vec<f64> = w.iter().zip(u).map(|(a, b)| a - r * b).collect();
        xi(&y)
    };
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    if g(0.0) > 0.0 {
        let mut step = 1.0;
        hi = step;
        while g(hi) > 0.0 {
            lo = hi;
            step *= 2.0;
            hi = step;
            if hi > 1e12 {
                return f64::INFINITY;
            }
        }
    } else {
        let mut step = 1.0;
        lo = -step;
        while g(lo) <= 0.0 {
            hi = lo;
            step *= 2.0;
            lo = -step;
            if lo < -1e12 {
                return f64::NEG_INFINITY;
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Minimises a convex function of one variable starting from `t0` where
/// `f(t0) = f0`. Returns the best point and value found.
pub(crate) fn line_min(f: &dyn Fn(f64) -> f64, t0: f64, f0: f64) -> (f64, f64) {
    let mut step = 1e-3f64.max(1e-3 * t0.abs());
    let (fp, fm) = (f(t0 + step), f(t0 - step));
    let dir = if fp < f0 && fp <= fm {
        1.0
    } else if fm < f0 {
        -1.0
    } else {
        // minimum is bracketed by [t0 - step, t0 + step]
        return golden(f, t0 - step, t0 + step, (t0, f0));
    };
    let mut prev = (t0, f0);
    let mut cur = (t0 + dir * step, if dir > 0.0 { fp } else { fm });
    loop {
        step *= 2.0;
        let nt = cur.0 + dir * step;
        let nf = f(nt);
        if nf >= cur.1 || nf.is_nan() {
            let (a, b) = if dir > 0.0 { (prev.0, nt) } else { (nt, prev.0) };
            return golden(f, a, b, cur);
        }
        prev = cur;
        cur = (nt, nf);
        if nt.abs() > DIVERGENCE {
            return (nt, if nf.is_finite() { f64::NEG_INFINITY } else { nf });
        }
    }
}

fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut best: (f64, f64)) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if (b - a).abs() <= 1e-12 * (1.0 + c.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    for (t, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Structural and economic checks of a regime.
///
/// The no-arbitrage condition is probed at zero and at
/// [`NO_ARBITRAGE_PROBES`] random losses drawn from `seed`, so a passing
/// result is probabilistic rather than a proof.
pub fn validate_regime(r: &RiskMeasurementRegime, seed: u64) -> Result<Report> {
    let mut rep = Report::new();
    let tol = 1e-10;
    let support = r.support();
    let market = r.market();

    let outside = market.basis().iter().all(|b| support.admits(b, tol));
    rep.push("market.in_support", outside, None, "security basis vanishes outside the support");
    rep.push("market.independent", true, Some(market.dim() as f64), "basis rank equals its length");

    // positivity: min price over non-negative eligible payoffs of unit mass
    let mut m = LpModel::new();
    let cs: Vec<usize> = market.prices().iter().map(|&p| m.free_var(p)).collect();
    let mut mass = Vec::new();
    for i in support.indices() {
        let terms: Vec<(usize, f64)> = cs.iter().zip(market.basis()).map(|(&j, b)| (j, b[i])).collect();
        mass.extend(terms.iter().copied());
        m.row(terms, Relation::Ge, 0.0);
    }
    m.row(mass, Relation::Eq, 1.0);
    let sol = m.build(Sense::Minimize).solve()?;
    let (ok, val) = match sol.status {
        LpStatus::Optimal => (sol.objective >= -tol, Some(sol.objective)),
        LpStatus::Infeasible => (true, None),
        LpStatus::Unbounded => (false, None),
    };
    rep.push_tol("market.positive", ok, val, tol, "no non-negative eligible payoff has a negative price");

    match market.unit(support)? {
        Some((_, u)) => {
            let min_coord = support.indices().iter().map(|&i| u[i]).fold(f64::INFINITY, f64::min);
            rep.push(
                "market.unit",
                true,
                Some(min_coord),
                "a non-negative, non-zero eligible payoff is priced at one (value: its smallest coordinate)",
            );
        }
        None => rep.push("market.unit", false, None, "no non-negative eligible payoff is priced at one"),
    }

    match r.acceptance() {
        AcceptanceSet::Polyhedral(p) => {
            rep.push("acceptance.monotone", p.monotone(), None, "every defining density is non-negative");
            let inside = p.functionals().iter().all(|f| support.admits(f.density(), tol));
            rep.push("acceptance.in_support", inside, None, "defining densities vanish outside the support");
            let mut m = LpModel::new();
            let idx = support.indices();
            let ys: Vec<usize> = idx.iter().map(|_| m.free_var(0.0)).collect();
            let y: Vec<Affine> = ys.iter().map(|&j| Affine::constant(0.0).plus(j, 1.0)).collect();
            r.acceptance().encode(&mut m, r.space().probs(), &idx, &y)?;
            let nonempty = m.build(Sense::Minimize).solve()?.status == LpStatus::Optimal;
            rep.push("acceptance.nonempty", nonempty, None, "the defining inequalities are feasible");
            let proper = p.functionals().iter().any(|f| idx.iter().any(|&i| f.density()[i].abs() > tol));
            rep.push("acceptance.proper", proper, None, "some defining functional is non-zero on the support");
        }
        AcceptanceSet::LawInvariant(_) => {
            rep.push("acceptance.monotone", true, None, "law-invariant families are monotone");
            rep.push("acceptance.nonempty", true, None, "zero is acceptable");
            rep.push("acceptance.proper", true, None, "large constants are not acceptable");
        }
    }

    if rep.get("market.unit").is_some_and(|c| c.passed) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probes = vec![vec![0.0; r.space().len()]];
        for _ in 0..NO_ARBITRAGE_PROBES {
            probes.push(
                (0..r.space().len())
                    .map(|i| if support.contains(i) { rng.gen_range(-10.0..10.0) } else { 0.0 })
                    .collect(),
            );
        }
        let mut failed = None;
        for (k, x) in probes.iter().enumerate() {
            if r.rho_signed(x)? == Signed::MinusInf {
                failed = Some(k);
                break;
            }
        }
        rep.push(
            "no_arbitrage",
            failed.is_none(),
            None,
            match failed {
                None => format!("probabilistic: risk is finite from below at zero and {NO_ARBITRAGE_PROBES} random probes"),
                Some(k) => format!("risk is -infinity at probe {k}"),
            },
        );
    }
    Ok(rep)
}
