//! Agents whose acceptance sets depend only on the distribution of the
//! loss: entropic risk, average value at risk and expectation. Their
//! pooled acceptance set is again law-invariant, and optimal allocations are
//! comonotone functions of the (securitized) aggregate loss.

use std::sync::Arc;

pub use crate::regime::{avar, avar_density, entropic, entropic_density, relative_entropy, LawInvariantKind};
use crate::error::{dim_check, Error, Result};
use crate::market::{self, security_selection, AgentSystem, Allocation};
use crate::regime::{securitized_min, RiskMeasurementRegime, SecurityMarket, Signed};
use crate::report::Report;
use crate::scenario::{ScenarioSpace, SupportMask};

/// Non-decreasing piecewise-linear functions `f_1, ..., f_n` with
/// `sum_i f_i(x) = x`. Slopes are constant between breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ComonotoneSplit {
    breaks: Vec<f64>,
    /// `slopes[i][k]` is the slope of `f_i` on the `k`-th segment
    /// (segment 0 lies left of the first breakpoint).
    slopes: Vec<Vec<f64>>,
    at_zero: Vec<f64>,
}

impl ComonotoneSplit {
    pub fn new(breaks: Vec<f64>, slopes: Vec<Vec<f64>>, at_zero: Vec<f64>) -> Result<Self> {
        dim_check("split offsets", at_zero.len(), slopes.len())?;
        if slopes.is_empty() {
            return Err(Error::Invalid("a split needs at least one part".into()));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("split breakpoints must increase strictly".into()));
        }
        for s in &slopes {
            dim_check("split slopes", s.len(), breaks.len() + 1)?;
        }
        for k in 0..=breaks.len() {
            let total: f64 = slopes.iter().map(|s| s[k]).sum();
            if slopes.iter().any(|s| s[k] < -1e-12) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("split slopes on segment {k} are not a partition of one")));
            }
        }
        if at_zero.iter().sum::<f64>().abs() > 1e-9 * (1.0 + at_zero.iter().map(|v| v.abs()).sum::<f64>()) {
            return Err(Error::Invalid("split values at zero must sum to zero".into()));
        }
        Ok(Self { breaks, slopes, at_zero })
    }

    /// `f_i(x) = w_i x` for weights summing to one.
    pub fn linear(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        Self::new(vec![], weights.into_iter().map(|w| vec![w]).collect(), vec![0.0; n])
    }

    pub fn parts(&self) -> usize {
        self.slopes.len()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn slopes(&self) -> &[Vec<f64>] {
        &self.slopes
    }

    pub fn at_zero(&self) -> &[f64] {
        &self.at_zero
    }

    fn antiderivative(&self, i: usize, x: f64) -> f64 {
        let s = &self.slopes[i];
        let Some(&b0) = self.breaks.first() else { return s[0] * x };
        if x < b0 {
            return s[0] * (x - b0);
        }
        let mut acc = 0.0;
        for (k, w) in self.breaks.windows(2).enumerate() {
            if x < w[1] {
                return acc + s[k + 1] * (x - w[0]);
            }
            acc += s[k + 1] * (w[1] - w[0]);
        }
        let last = *self.breaks.last().unwrap();
        acc + s[self.breaks.len()] * (x - last)
    }

    pub fn eval(&self, i: usize, x: f64) -> f64 {
        self.at_zero[i] + self.antiderivative(i, x) - self.antiderivative(i, 0.0)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.parts()).map(|i| x.iter().map(|&v| self.eval(i, v)).collect()).collect()
    }

    /// Moves cash `shift[i]` into part `i`; the shifts must sum to zero.
    pub fn with_cash(&self, shift: &[f64]) -> Result<Self> {
        dim_check("cash shifts", shift.len(), self.parts())?;
        let at_zero = self.at_zero.iter().zip(shift).map(|(a, b)| a + b).collect();
        Self::new(self.breaks.clone(), self.slopes.clone(), at_zero)
    }
}

/// Result of convolving entropic agents that only trade cash.
#[derive(Debug, Clone)]
pub struct EntropicInfConv {
    /// Aggregate risk aversion `1 / sum_i (1 / alpha_i)`.
    pub alpha: f64,
    pub value: f64,
    pub split: ComonotoneSplit,
}

/// Convolution of entropic risks: the value is the entropic risk at the
/// harmonic aggregate risk aversion, attained by proportional sharing.
pub fn entropic_infconv(alphas: &[f64], probs: &[f64], x: &[f64]) -> Result<EntropicInfConv> {
    if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::Invalid("risk aversions must be positive".into()));
    }
    dim_check("loss", x.len(), probs.len())?;
    let alpha = 1.0 / alphas.iter().map(|a| 1.0 / a).sum::<f64>();
    let split = ComonotoneSplit::linear(alphas.iter().map(|a| alpha / a).collect())?;
    Ok(EntropicInfConv { alpha, value: entropic(alpha, probs, x), split })
}

/// Level `z` solving `E[exp(-gamma (z - Y)^+)] = 1 - beta`: below it the
/// entropic agent carries the loss, above it the AVaR agent does.
pub fn entropic_avar_threshold(gamma: f64, beta: f64, probs: &[f64], y: &[f64]) -> f64 {
    let g = |z: f64| -> f64 {
        probs.iter().zip(y).map(|(p, v)| p * (-gamma * (z - v).max(0.0)).exp()).sum::<f64>() - (1.0 - beta)
    };
    let mut lo = y.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mut hi = lo + 1.0;
    while g(hi) > 0.0 {
        let w = hi - lo;
        lo = hi;
        hi += 2.0 * w;
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
    0.5 * (lo + hi)
}

/// The pooled base functional of a set of law-invariant agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convolution {
    Entropic { alpha: f64 },
    AVaR { beta: f64 },
    Expectation,
    /// Entropic risk with aversion `gamma` convolved with AVaR at `beta`.
    EntropicAVaR { gamma: f64, beta: f64 },
}

impl Convolution {
    pub fn of(kinds: &[LawInvariantKind]) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Invalid("no agents".into()));
        }
        if kinds.iter().any(|k| matches!(k, LawInvariantKind::Expectation)) {
            return Ok(Self::Expectation);
        }
        let inv: f64 = kinds
            .iter()
            .filter_map(|k| if let LawInvariantKind::Entropic { alpha } = k { Some(1.0 / alpha) } else { None })
            .sum();
        let beta = kinds
            .iter()
            .filter_map(|k| if let LawInvariantKind::AVaR { beta } = k { Some(*beta) } else { None })
            .fold(None, |m: Option<f64>, b| Some(m.map_or(b, |v| v.min(b))));
        Ok(match (inv > 0.0, beta) {
            (true, None) => Self::Entropic { alpha: 1.0 / inv },
            (false, Some(beta)) => Self::AVaR { beta },
            (true, Some(beta)) => Self::EntropicAVaR { gamma: 1.0 / inv, beta },
            (false, None) => unreachable!(),
        })
    }

    pub fn value(&self, probs: &[f64], y: &[f64]) -> f64 {
        match *self {
            Self::Entropic { alpha } => entropic(alpha, probs, y),
            Self::AVaR { beta } => avar(beta, probs, y),
            Self::Expectation => probs.iter().zip(y).map(|(p, v)| p * v).sum(),
            Self::EntropicAVaR { gamma, beta } => {
                let z = entropic_avar_threshold(gamma, beta, probs, y);
                let upper: Vec<f64> = y.iter().map(|v| (v - z).max(0.0)).collect();
                let lower: Vec<f64> = y.iter().map(|v| v.min(z)).collect();
                avar(beta, probs, &upper) + entropic(gamma, probs, &lower)
            }
        }
    }

    /// A maximising probability density in the dual representation at `y`.
    pub fn density(&self, probs: &[f64], y: &[f64]) -> Vec<f64> {
        match *self {
            Self::Entropic { alpha } => entropic_density(alpha, probs, y),
            Self::AVaR { beta } => avar_density(beta, probs, y),
            Self::Expectation => vec![1.0; y.len()],
            Self::EntropicAVaR { gamma, beta } => {
                let z = entropic_avar_threshold(gamma, beta, probs, y);
                let lower: Vec<f64> = y.iter().map(|v| v.min(z)).collect();
                entropic_density(gamma, probs, &lower)
            }
        }
    }

    /// Whether the density `q` has finite penalty for every agent.
    pub fn admits_density(kinds: &[LawInvariantKind], q: &[f64]) -> bool {
        kinds.iter().all(|k| match *k {
            LawInvariantKind::Entropic { .. } => q.iter().all(|&v| v >= -1e-12),
            LawInvariantKind::AVaR { beta } => q.iter().all(|&v| v >= -1e-12 && v <= 1.0 / (1.0 - beta) + 1e-9),
            LawInvariantKind::Expectation => q.iter().all(|&v| (v - 1.0).abs() <= 1e-9),
        })
    }

    /// Optimal comonotone split of `y` among agents of the given kinds,
    /// without cash rebalancing.
    pub fn split(&self, kinds: &[LawInvariantKind], probs: &[f64], y: &[f64]) -> Result<ComonotoneSplit> {
        let n = kinds.len();
        let first = |pred: &dyn Fn(&LawInvariantKind) -> bool| kinds.iter().position(pred);
        match *self {
            Self::Expectation => {
                let e = first(&|k| matches!(k, LawInvariantKind::Expectation)).unwrap();
                ComonotoneSplit::linear((0..n).map(|i| if i == e { 1.0 } else { 0.0 }).collect())
            }
            Self::AVaR { beta } => {
                let a = first(&|k| matches!(k, LawInvariantKind::AVaR { beta: b } if *b == beta)).unwrap();
                ComonotoneSplit::linear((0..n).map(|i| if i == a { 1.0 } else { 0.0 }).collect())
            }
            Self::Entropic { alpha } => ComonotoneSplit::linear(
                kinds
                    .iter()
                    .map(|k| if let LawInvariantKind::Entropic { alpha: ai } = k { alpha / ai } else { 0.0 })
                    .collect(),
            ),
            Self::EntropicAVaR { gamma, beta } => {
                let z = entropic_avar_threshold(gamma, beta, probs, y);
                let a = first(&|k| matches!(k, LawInvariantKind::AVaR { beta: b } if *b == beta)).unwrap();
                let slopes: Vec<Vec<f64>> = kinds
                    .iter()
                    .enumerate()
                    .map(|(i, k)| match k {
                        LawInvariantKind::Entropic { alpha } => vec![gamma / alpha, 0.0],
                        _ if i == a => vec![0.0, 1.0],
                        _ => vec![0.0, 0.0],
                    })
                    .collect();
                // (x - z)^+ at zero is (-z)^+, and x ^ z at zero is 0 ^ z
                let at_zero = kinds
                    .iter()
                    .enumerate()
                    .map(|(i, k)| match k {
                        LawInvariantKind::Entropic { alpha } => gamma / alpha * z.min(0.0),
                        _ if i == a => (-z).max(0.0),
                        _ => 0.0,
                    })
                    .collect();
                ComonotoneSplit::new(vec![z], slopes, at_zero)
            }
        }
    }
}

/// Law-invariant agents whose securities are all priced by `scale * E_Q[.]`.
#[derive(Debug, Clone)]
pub struct LawInvProblem {
    kinds: Vec<LawInvariantKind>,
    system: AgentSystem,
    scale: f64,
    density: Vec<f64>,
}

impl LawInvProblem {
    pub fn new(
        space: Arc<ScenarioSpace>,
        kinds: Vec<LawInvariantKind>,
        bases: Vec<Vec<Vec<f64>>>,
        scale: f64,
        density: Vec<f64>,
    ) -> Result<Self> {
        dim_check("security bases", bases.len(), kinds.len())?;
        dim_check("pricing density", density.len(), space.len())?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Invalid("price scale must be positive".into()));
        }
        if density.iter().any(|&q| !(q.is_finite() && q >= 0.0)) {
            return Err(Error::Invalid("pricing density must be non-negative".into()));
        }
        if (space.mean(&density) - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid("pricing density must have mean one".into()));
        }
        let regimes = kinds
            .iter()
            .zip(bases)
            .map(|(k, b)| {
                let m = SecurityMarket::priced_by(space.clone(), b, scale, &density)?;
                RiskMeasurementRegime::law_invariant(*k, m)
            })
            .collect::<Result<Vec<_>>>()?;
        let system = AgentSystem::new(regimes)?;
        Ok(Self { kinds, system, scale, density })
    }

    pub fn kinds(&self) -> &[LawInvariantKind] {
        &self.kinds
    }

    pub fn system(&self) -> &AgentSystem {
        &self.system
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        self.system.space()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn convolution(&self) -> Result<Convolution> {
        Convolution::of(&self.kinds)
    }

    /// Pooled securities priced by `scale * E_Q`.
    pub fn pooled_market(&self) -> Result<SecurityMarket> {
        SecurityMarket::priced_by(self.space().clone(), self.system.pooled_basis(), self.scale, &self.density)
    }
}

/// Checks of the standing assumptions for law-invariant problems.
pub fn check_assumptions(p: &LawInvProblem) -> Result<Report> {
    let mut rep = Report::new();
    let probs = p.space().probs().to_vec();
    rep.push(
        "pricing.in_domain",
        Convolution::admits_density(&p.kinds, &p.density),
        None,
        "the pricing density has finite penalty for every agent",
    );
    let market = p.pooled_market()?;
    let unit = market.unit(&SupportMask::full(p.space().clone()))?;
    rep.push("pricing.unit", unit.is_some(), None, "a non-negative pooled security is priced at one");
    // every zero-price direction must be detectable by some admissible density
    for (j, c) in market.kernel_coeffs().iter().enumerate() {
        let nvec = market.payoff(c);
        for (sign, tag) in [(1.0, "+"), (-1.0, "-")] {
            let v: Vec<f64> = nvec.iter().map(|x| sign * x).collect();
            let best = admissible_sup(&p.kinds, &probs, &v);
            rep.push_tol(
                &format!("kernel{j}{tag}.witness"),
                best > 1e-12,
                Some(best),
                1e-12,
                "largest expectation of the zero-price direction over admissible densities",
            );
        }
    }
    Ok(rep)
}

/// `sup E[q v]` over densities admissible for every agent.
fn admissible_sup(kinds: &[LawInvariantKind], probs: &[f64], v: &[f64]) -> f64 {
    if kinds.iter().any(|k| matches!(k, LawInvariantKind::Expectation)) {
        return probs.iter().zip(v).map(|(p, x)| p * x).sum();
    }
    match kinds
        .iter()
        .filter_map(|k| if let LawInvariantKind::AVaR { beta } = k { Some(*beta) } else { None })
        .reduce(f64::min)
    {
        Some(beta) => avar(beta, probs, v),
        None => v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
    }
}

/// Optimal pooled risk of a law-invariant problem with the attaining data.
#[derive(Debug, Clone)]
pub struct LawInvSolution {
    pub value: f64,
    /// Optimal pooled security, priced at `value`.
    pub payoff: Vec<f64>,
    /// `X - payoff`, on the boundary of the pooled acceptance set.
    pub residual: Vec<f64>,
    /// Split of `residual` into acceptable parts (cash-rebalanced).
    pub split: ComonotoneSplit,
    pub allocation: Allocation,
    /// Per-scenario weights of a subgradient of the pooled risk at `X`.
    pub subgradient: Vec<f64>,
}

/// Pooled risk `inf { price(Z) : xi(X - Z) <= 0 }` where `xi` is the
/// convolution of the agents' base functionals, followed by a comonotone
/// split of the residual and a selection of the payoff into securities.
pub fn lawinv_lambda(p: &LawInvProblem, x: &[f64]) -> Result<LawInvSolution> {
    dim_check("loss", x.len(), p.space().len())?;
    let conv = p.convolution()?;
    let probs = p.space().probs().to_vec();
    let market = p.pooled_market()?;
    let support = SupportMask::full(p.space().clone());
    let xi = {
        let probs = probs.clone();
        move |y: &[f64]| conv.value(&probs, y)
    };
    let (value, payoff) = if matches!(conv, Convolution::Entropic { .. } | Convolution::EntropicAVaR { .. }) {
        let s = securitized_min(&xi, x, &market, &support)?;
        match (s.value, s.payoff) {
            (Signed::Finite(v), Some(z)) => (v, z),
            (Signed::MinusInf, _) => {
                return Err(Error::Contract("pooled risk is -infinity".into()));
            }
            _ => return Err(Error::Domain("loss is outside the domain of the pooled risk".into())),
        }
    } else {
        let sol = market::lambda_raw(p.system(), x)?
            .ok_or_else(|| Error::Domain("loss is outside the domain of the pooled risk".into()))?;
        (sol.value, sol.payoff)
    };
    let residual: Vec<f64> = x.iter().zip(&payoff).map(|(a, b)| a - b).collect();
    let raw = conv.split(&p.kinds, &probs, &residual)?;
    let parts = raw.apply(&residual);
    // make every part except the first exactly acceptable; the first absorbs the rest
    let mut shift = vec![0.0; p.kinds.len()];
    for i in 1..parts.len() {
        shift[i] = -p.kinds[i].value(&probs, &parts[i]);
    }
    shift[0] = -shift[1..].iter().sum::<f64>();
    let split = raw.with_cash(&shift)?;
    let shares = security_selection(p.system(), &payoff)?;
    let allocation = Allocation::new(
        split
            .apply(&residual)
            .into_iter()
            .zip(shares)
            .map(|(a, z)| a.iter().zip(&z).map(|(u, v)| u + v).collect())
            .collect(),
    );
    let subgradient = subgradient_weights(&conv, &probs, &residual, &market, &support)?;
    Ok(LawInvSolution { value, payoff, residual, split, allocation, subgradient })
}

/// Gradient of the pooled risk: the dual density of the convolution at the
/// residual, normalised so that the unit security is priced at one.
fn subgradient_weights(
    conv: &Convolution,
    probs: &[f64],
    residual: &[f64],
    market: &SecurityMarket,
    support: &SupportMask,
) -> Result<Vec<f64>> {
    let q = conv.density(probs, residual);
    let (_, u) = market
        .unit(support)?
        .ok_or_else(|| Error::Contract("no non-negative pooled security is priced at one".into()))?;
    let eq_u: f64 = probs.iter().zip(&q).zip(&u).map(|((p, d), v)| p * d * v).sum();
    Ok(probs.iter().zip(&q).map(|(p, d)| p * d / eq_u).collect())
}

/// Closed-form solution of two entropic agents with aversions `beta`,
/// `gamma`, where agent 1 may trade `1_A` and `1_{A^c}` and agent 2 only
/// `1_A`, all priced by `scale * E_Q` with `Q(A) = 1/2`.
#[derive(Debug, Clone)]
pub struct TwoEntropicSolution {
    pub value: f64,
    /// Cash amount `value / scale`.
    pub cash: f64,
    /// Size of the zero-price position `r (1_A - 1_{A^c})`.
    pub r: f64,
    /// `X - cash - r (1_A - 1_{A^c})`, with zero aggregate entropic risk.
    pub residual: Vec<f64>,
    pub allocation: Allocation,
}

pub fn lambda_two_entropic(
    scale: f64,
    beta: f64,
    gamma: f64,
    in_a: &[bool],
    probs: &[f64],
    x: &[f64],
) -> Result<TwoEntropicSolution> {
    dim_check("event indicator", in_a.len(), probs.len())?;
    dim_check("loss", x.len(), probs.len())?;
    if !(beta > 0.0 && gamma > 0.0 && scale > 0.0) {
        return Err(Error::Invalid("risk aversions and price scale must be positive".into()));
    }
    if in_a.iter().all(|&b| b) || in_a.iter().all(|&b| !b) {
        return Err(Error::Invalid("the event and its complement must both be non-null".into()));
    }
    let alpha = beta * gamma / (beta + gamma);
    // work in logs: la = log E[exp(alpha X) 1_A]
    let lse = |pick: bool| -> f64 {
        let m = x.iter().zip(in_a).filter(|(_, &a)| a == pick).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = x
            .iter()
            .zip(in_a)
            .zip(probs)
            .filter(|((_, &a), _)| a == pick)
            .map(|((v, _), p)| p * (alpha * (v - m)).exp())
            .sum();
        alpha * m + s.ln()
    };
    let (la, lb) = (lse(true), lse(false));
    let cash = (la + lb + 2.0 * 2f64.ln()) / (2.0 * alpha);
    let value = scale * cash;
    // a' = exp(-alpha cash) E[..1_A], b' likewise; r solves a' e^{-alpha r} + b' e^{alpha r} = 1
    let a1 = (la - alpha * cash).exp();
    let b1 = (lb - alpha * cash).exp();
    let disc = 1.0 - 4.0 * a1 * b1;
    if disc < -1e-9 {
        return Err(Error::Numerical(format!("negative discriminant {disc}")));
    }
    let y = 2.0 * a1 / (1.0 + disc.max(0.0).sqrt());
    let r = y.ln() / alpha;
    let residual: Vec<f64> =
        x.iter().zip(in_a).map(|(v, &a)| v - cash - if a { r } else { -r }).collect();
    let w1 = gamma / (beta + gamma);
    let part1: Vec<f64> =
        residual.iter().zip(in_a).map(|(v, &a)| w1 * v + cash + if a { r } else { -r }).collect();
    let part2: Vec<f64> = residual.iter().map(|v| (1.0 - w1) * v).collect();
    Ok(TwoEntropicSolution { value, cash, r, residual, allocation: Allocation::new(vec![part1, part2]) })
}

/// Solution of an AVaR agent (trading `1_A`, `1_{A^c}`) and an entropic
/// agent (trading `1_A`) under the pricing density `Q*`.
#[derive(Debug, Clone)]
pub struct AvarEntropicSolution {
    pub value: f64,
    /// Maximising density of the dual problem.
    pub dual_density: Vec<f64>,
    /// Admissible range for the size of the zero-price position.
    pub s_range: (f64, f64),
    /// Chosen size, the midpoint of `s_range`.
    pub s: f64,
    /// `Q*(A) / (1 - Q*(A))`, so that `N = 1_A - r 1_{A^c}` has zero price.
    pub r: f64,
    /// Threshold splitting the residual between the two agents.
    pub zeta: f64,
    /// Cash moved from the AVaR agent to the entropic agent.
    pub cash_transfer: f64,
    /// `X - value - s N`.
    pub residual: Vec<f64>,
    pub allocation: Allocation,
}

/// Maximises `E[q X] - E[q log q] / gamma` over `0 <= q <= cap` on the
/// scenarios in `block` with `E[q 1_block] = mass`. Returns the density on
/// the block, the objective and the multiplier of the mass constraint.
fn capped_gibbs(gamma: f64, cap: f64, probs: &[f64], x: &[f64], block: &[usize], mass: f64) -> (Vec<f64>, f64, f64) {
    let lcap = cap.ln();
    let q_at = |mu: f64| -> Vec<f64> { block.iter().map(|&i| (gamma * (x[i] - mu) - 1.0).min(lcap).exp()).collect() };
    let m_at = |mu: f64| -> f64 { block.iter().zip(q_at(mu)).map(|(&i, q)| probs[i] * q).sum() };
    let xmax = block.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (xmax - 1.0, xmax + 1.0);
    while m_at(lo) < mass {
        lo -= 2.0 * (hi - lo);
    }
    while m_at(hi) > mass {
        hi += 2.0 * (hi - lo);
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if m_at(mid) > mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let q = q_at(mu);
    let obj = block
        .iter()
        .zip(&q)
        .map(|(&i, &qi)| probs[i] * (qi * x[i] - if qi > 0.0 { qi * qi.ln() } else { 0.0 } / gamma))
        .sum();
    (q, obj, mu)
}

pub fn solve_avar_entropic(
    beta: f64,
    gamma: f64,
    in_a: &[bool],
    q_star: &[f64],
    probs: &[f64],
    x: &[f64],
) -> Result<AvarEntropicSolution> {
    let n = probs.len();
    dim_check("event indicator", in_a.len(), n)?;
    dim_check("pricing density", q_star.len(), n)?;
    dim_check("loss", x.len(), n)?;
    LawInvariantKind::avar(beta)?;
    LawInvariantKind::entropic(gamma)?;
    let cap = 1.0 / (1.0 - beta);
    let pa: f64 = (0..n).filter(|&i| in_a[i]).map(|i| probs[i]).sum();
    let qa: f64 = (0..n).filter(|&i| in_a[i]).map(|i| probs[i] * q_star[i]).sum();
    let q_mean: f64 = probs.iter().zip(q_star).map(|(p, q)| p * q).sum();
    if (q_mean - 1.0).abs() > 1e-12 || q_star.iter().any(|&q| q < 0.0 || q > cap + 1e-12) {
        return Err(Error::Contract("pricing density is not admissible for the AVaR agent".into()));
    }
    let lo_qa = (1.0 - (1.0 - pa) / (1.0 - beta)).max(0.0);
    let hi_qa = pa / (1.0 - beta);
    if !(qa > lo_qa && qa < hi_qa) {
        return Err(Error::Contract(format!(
            "Q*(A) = {qa} must lie strictly between {lo_qa} and {hi_qa}"
        )));
    }
    let block_a: Vec<usize> = (0..n).filter(|&i| in_a[i]).collect();
    let block_c: Vec<usize> = (0..n).filter(|&i| !in_a[i]).collect();
    let (qa_d, va, mu_a) = capped_gibbs(gamma, cap, probs, x, &block_a, qa);
    let (qc_d, vc, mu_c) = capped_gibbs(gamma, cap, probs, x, &block_c, 1.0 - qa);
    let value = va + vc;
    let mut dual_density = vec![0.0; n];
    for (&i, q) in block_a.iter().zip(qa_d) {
        dual_density[i] = q;
    }
    for (&i, q) in block_c.iter().zip(qc_d) {
        dual_density[i] = q;
    }
    // the dual value is differentiable in Q(A) at interior points, so both
    // one-sided bounds on s equal (1 - Q*(A)) times the derivative
    let slope = (1.0 - qa) * (mu_a - mu_c);
    let s_range = (slope, slope);
    let s = 0.5 * (s_range.0 + s_range.1);
    let r = qa / (1.0 - qa);
    let nvec: Vec<f64> = in_a.iter().map(|&a| if a { 1.0 } else { -r }).collect();
    let residual: Vec<f64> = x.iter().zip(&nvec).map(|(v, nv)| v - value - s * nv).collect();
    let zeta = entropic_avar_threshold(gamma, beta, probs, &residual);
    let upper: Vec<f64> = residual.iter().map(|v| (v - zeta).max(0.0)).collect();
    let cash_transfer = avar(beta, probs, &upper);
    let part1: Vec<f64> = upper
        .iter()
        .zip(in_a)
        .map(|(u, &a)| u - cash_transfer + value - if a { 0.0 } else { s * r })
        .collect();
    let part2: Vec<f64> = residual
        .iter()
        .zip(in_a)
        .map(|(v, &a)| v.min(zeta) + cash_transfer + if a { s } else { 0.0 })
        .collect();
    Ok(AvarEntropicSolution {
        value,
        dual_density,
        s_range,
        s,
        r,
        zeta,
        cash_transfer,
        residual,
        allocation: Allocation::new(vec![part1, part2]),
    })
}
