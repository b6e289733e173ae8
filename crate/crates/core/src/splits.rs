//! Choosing how many subsidiaries to split a portfolio into when every
//! additional subsidiary adds a fixed cost.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lawinv::{lawinv_lambda, LawInvProblem, LawInvariantKind};
use crate::market::{lambda_raw, AgentSystem, Allocation};
use crate::regime::{RiskMeasurementRegime, SecurityMarket};
use crate::report::Report;
use crate::scenario::{Extended, Functional, ScenarioSpace};

/// Rule producing the regime of the `i`-th subsidiary; both variants
/// repeat a finite list cyclically.
#[derive(Debug, Clone)]
pub enum RegimeFactory {
    /// Law-invariant subsidiaries that trade cash at `scale` per unit.
    LawInvariant { space: Arc<ScenarioSpace>, kinds: Vec<LawInvariantKind>, scale: f64 },
    /// LP-representable subsidiaries.
    Repeating(Vec<RiskMeasurementRegime>),
}

impl RegimeFactory {
    pub fn identical_entropic(space: Arc<ScenarioSpace>, alpha: f64) -> Result<Self> {
        Ok(Self::LawInvariant { space, kinds: vec![LawInvariantKind::entropic(alpha)?], scale: 1.0 })
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        match self {
            Self::LawInvariant { space, .. } => space,
            Self::Repeating(r) => r[0].space(),
        }
    }

    fn period(&self) -> usize {
        match self {
            Self::LawInvariant { kinds, .. } => kinds.len(),
            Self::Repeating(r) => r.len(),
        }
    }

    pub fn regime(&self, i: usize) -> Result<RiskMeasurementRegime> {
        match self {
            Self::LawInvariant { space, kinds, scale } => {
                RiskMeasurementRegime::law_invariant(kinds[i % kinds.len()], SecurityMarket::cash(space.clone(), *scale)?)
            }
            Self::Repeating(r) => Ok(r[i % r.len()].clone()),
        }
    }

    /// Market risk of the first `n` subsidiaries at `w`; `None` outside the domain.
    pub fn lambda_n(&self, n: usize, w: &[f64]) -> Result<Option<(f64, Allocation)>> {
        match self {
            Self::LawInvariant { space, kinds, scale } => {
                let ks: Vec<LawInvariantKind> = (0..n).map(|i| kinds[i % kinds.len()]).collect();
                let bases = vec![vec![vec![1.0; space.len()]]; n];
                let p = LawInvProblem::new(space.clone(), ks, bases, *scale, vec![1.0; space.len()])?;
                match lawinv_lambda(&p, w) {
                    Ok(sol) => Ok(Some((sol.value, sol.allocation))),
                    Err(Error::Domain(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            }
            Self::Repeating(_) => {
                let sys = AgentSystem::new((0..n).map(|i| self.regime(i)).collect::<Result<_>>()?)?;
                Ok(lambda_raw(&sys, w)?.map(|s| (s.value, s.allocation)))
            }
        }
    }
}

/// Non-decreasing cost of running `n` subsidiaries.
#[derive(Debug, Clone, PartialEq)]
pub enum Cost {
    /// `rate * n`.
    Linear { rate: f64 },
    /// `height * ceil(n / width)`.
    Step { width: usize, height: f64 },
    /// `values[n - 1]`, continued beyond the table by `tail_rate` per subsidiary.
    Table { values: Vec<f64>, tail_rate: f64 },
}

impl Cost {
    pub fn eval(&self, n: usize) -> f64 {
        match self {
            Self::Linear { rate } => rate * n as f64,
            Self::Step { width, height } => height * n.div_ceil(*width) as f64,
            Self::Table { values, tail_rate } => {
                if n <= values.len() {
                    values[n - 1]
                } else {
                    values.last().copied().unwrap_or(0.0) + tail_rate * (n - values.len()) as f64
                }
            }
        }
    }

    /// Whether the cost grows without bound, as the stopping rule requires.
    pub fn diverges(&self) -> bool {
        match self {
            Self::Linear { rate } => *rate > 0.0,
            Self::Step { width, height } => *width > 0 && *height > 0.0,
            Self::Table { tail_rate, .. } => *tail_rate > 0.0,
        }
    }

    fn validate(&self, n_max: usize) -> Result<()> {
        if let Self::Step { width: 0, .. } = self {
            return Err(Error::Invalid("step width must be positive".into()));
        }
        if !self.diverges() {
            return Err(Error::Invalid("the cost must grow without bound".into()));
        }
        let mut prev = 0.0;
        for n in 1..=n_max.max(1) {
            let c = self.eval(n);
            if !(c.is_finite() && c >= 0.0) || c < prev {
                return Err(Error::Invalid(format!("cost must be non-negative and non-decreasing (fails at n = {n})")));
            }
            prev = c;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SplitProblem {
    pub factory: RegimeFactory,
    pub cost: Cost,
    pub n_max: usize,
    /// Price functional used for the lower bound. Defaults to `scale * E`
    /// for law-invariant factories.
    pub reference_price: Option<Functional>,
}

impl SplitProblem {
    pub fn new(factory: RegimeFactory, cost: Cost, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Invalid("n_max must be at least one".into()));
        }
        cost.validate(n_max)?;
        if let RegimeFactory::Repeating(r) = &factory {
            if r.is_empty() {
                return Err(Error::Invalid("no regimes to repeat".into()));
            }
            if r.iter().any(|g| !g.acceptance().lp_representable()) {
                return Err(Error::Unsupported("repeating factories must be LP-representable".into()));
            }
        }
        if let RegimeFactory::LawInvariant { kinds, scale, .. } = &factory {
            if kinds.is_empty() || !(*scale > 0.0) {
                return Err(Error::Invalid("law-invariant factory needs kinds and a positive scale".into()));
            }
        }
        Ok(Self { factory, cost, n_max, reference_price: None })
    }

    pub fn with_reference_price(mut self, phi: Functional) -> Self {
        self.reference_price = Some(phi);
        self
    }

    fn default_price(&self) -> Option<Functional> {
        match (&self.reference_price, &self.factory) {
            (Some(p), _) => Some(p.clone()),
            (None, RegimeFactory::LawInvariant { space, scale, .. }) => {
                Functional::new(space.clone(), vec![*scale; space.len()]).ok()
            }
            (None, RegimeFactory::Repeating(_)) => None,
        }
    }
}

/// Conjugates of the subsidiaries at a reference price.
#[derive(Debug, Clone)]
pub struct SupCheck {
    pub report: Report,
    /// `rho_i*(phi)` for one period of the factory.
    pub terms: Vec<Extended>,
    /// `sum_i rho_i*(phi)` over all subsidiaries, exact by periodicity.
    pub total: Extended,
}

/// Whether the series of conjugates at `phi` converges and `phi` prices
/// every subsidiary's securities correctly.
pub fn check_sup_infty(p: &SplitProblem, phi: &Functional) -> Result<SupCheck> {
    let mut report = Report::new();
    let mut terms = Vec::new();
    for i in 0..p.factory.period() {
        let r = p.factory.regime(i)?;
        let zero = r.rho_raw(&vec![0.0; r.space().len()])?;
        let at_zero = zero.finite().unwrap_or(f64::INFINITY);
        report.push_tol(&format!("normalized.{i}"), at_zero.abs() <= 1e-10, Some(at_zero), 1e-10, "risk of the zero loss");
        let mis = r.price_mismatch(phi);
        report.push_tol(&format!("prices.{i}"), mis <= 1e-9, Some(mis), 1e-9, "largest mispricing of the subsidiary's securities");
        let sup = r.support_function(phi)?;
        report.push_tol(
            &format!("nonpositive.{i}"),
            matches!(sup, Extended::Finite(v) if v <= 1e-10),
            sup.finite(),
            1e-10,
            "largest price of an acceptable position",
        );
        terms.push(r.conjugate(phi)?);
    }
    // normalised subsidiaries have non-negative conjugates, so a periodic
    // series converges exactly when every term in a period vanishes
    let total = if terms.iter().all(|t| matches!(t, Extended::Finite(v) if v.abs() <= 1e-10)) {
        Extended::Finite(0.0)
    } else {
        Extended::Infinite
    };
    report.push("summable", total.is_finite(), total.finite(), "sum of conjugates over all subsidiaries");
    Ok(SupCheck { report, terms, total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitStep {
    pub n: usize,
    pub lambda: f64,
    pub cost: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub n_star: usize,
    pub value: f64,
    pub objective: f64,
    pub allocation: Allocation,
    pub trajectory: Vec<SplitStep>,
    /// Lower bound `phi(W) - sum_i rho_i*(phi)` on every market risk, if available.
    pub lower_bound: Option<f64>,
    /// The search ended at `n_max` without the bound ruling out larger `n`.
    pub cap_limited: bool,
}

/// Minimises `Lambda_n(W) + cost(n)` over `n`, stopping once the lower bound
/// plus the cost of the next size exceeds the best objective found.
pub fn split_optimize(p: &SplitProblem, w: &[f64]) -> Result<SplitResult> {
    let lower_bound = match p.default_price() {
        Some(phi) => {
            let chk = check_sup_infty(p, &phi)?;
            let prices_ok = chk.report.checks.iter().filter(|c| c.name.starts_with("prices.")).all(|c| c.passed);
            match chk.total {
                Extended::Finite(s) if prices_ok => Some(phi.apply_raw(w) - s),
                _ => None,
            }
        }
        None => None,
    };
    let mut best: Option<(usize, f64, f64, Allocation)> = None;
    let mut trajectory = Vec::new();
    let mut cap_limited = true;
    for n in 1..=p.n_max {
        let Some((lambda, alloc)) = p.factory.lambda_n(n, w)? else { continue };
        let cost = p.cost.eval(n);
        let objective = lambda + cost;
        trajectory.push(SplitStep { n, lambda, cost, objective });
        if best.as_ref().map_or(true, |b| objective < b.2) {
            best = Some((n, lambda, objective, alloc));
        }
        if let (Some(lb), Some(b)) = (lower_bound, &best) {
            if n < p.n_max && lb + p.cost.eval(n + 1) >= b.2 {
                cap_limited = false;
                break;
            }
        }
    }
    let (n_star, value, objective, allocation) =
        best.ok_or_else(|| Error::Domain(format!("no split with at most {} subsidiaries has finite risk", p.n_max)))?;
    Ok(SplitResult { n_star, value, objective, allocation, trajectory, lower_bound, cap_limited })
}
