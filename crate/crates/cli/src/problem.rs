//! Problem documents: parsing, cross-reference checks and conversion into
//! library objects. Every vector is an object keyed by scenario label.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use riskshare::lawinv::LawInvProblem;
use riskshare::market::AgentSystem;
use riskshare::regime::{AcceptanceSet, LawInvariantKind, PolyhedralAcceptanceSet, RiskMeasurementRegime, SecurityMarket};
use riskshare::splits::{Cost, RegimeFactory, SplitProblem};
use riskshare::{Error, Functional, Result, ScenarioSpace, SupportMask};
use serde::Deserialize;

pub type LabelVector = BTreeMap<String, f64>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub scenarios: Scenarios,
    #[serde(default)]
    pub pricing: Option<Pricing>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub loss: Option<LabelVector>,
    /// Keyed by agent name.
    #[serde(default)]
    pub endowments: Option<BTreeMap<String, LabelVector>>,
    #[serde(default)]
    pub split: Option<SplitSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenarios {
    pub labels: Vec<String>,
    /// Uniform when omitted.
    #[serde(default)]
    pub probs: Option<LabelVector>,
}

/// Prices `scale * E[density * Z]`; used for securities without an explicit
/// price and required when every agent is law-invariant.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pricing {
    #[serde(default)]
    pub density: Option<LabelVector>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    /// Full support when omitted.
    #[serde(default)]
    pub support: Option<Vec<String>>,
    pub acceptance: AcceptanceSpec,
    /// Cash only when omitted.
    #[serde(default)]
    pub securities: Option<Vec<SecuritySpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum AcceptanceSpec {
    Polyhedral(Vec<Constraint>),
    Entropic(f64),
    Avar(f64),
    Expectation,
}

/// `E[density * X] <= bound`, or `sum_w weights_w X_w <= bound`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    #[serde(default)]
    pub density: Option<LabelVector>,
    #[serde(default)]
    pub weights: Option<LabelVector>,
    pub bound: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecuritySpec {
    pub payoff: LabelVector,
    #[serde(default)]
    pub price: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Law-invariant acceptance specs repeated cyclically, or the string
    /// `"agents"` to repeat the agents of the file.
    pub subsidiaries: Subsidiaries,
    pub cost: CostSpec,
    pub n_max: usize,
    #[serde(default)]
    pub reference_price: Option<LabelVector>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Subsidiaries {
    Agents(String),
    LawInvariant(Vec<AcceptanceSpec>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum CostSpec {
    Linear(f64),
    Step { width: usize, height: f64 },
    Table { values: Vec<f64>, tail_rate: f64 },
}

/// A parsed and cross-checked problem.
pub struct Model {
    pub space: Arc<ScenarioSpace>,
    pub names: Vec<String>,
    pub system: AgentSystem,
    /// Present when every agent is law-invariant and a pricing density is given.
    pub lawinv: Option<LawInvProblem>,
    pub file: ProblemFile,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Inline JSON object or a path to a file holding one.
pub fn inline_or_file<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T> {
    if arg.trim_start().starts_with('{') {
        serde_json::from_str(arg).map_err(|e| Error::Invalid(format!("inline document: {e}")))
    } else {
        read_json(Path::new(arg))
    }
}

/// Positional vector from a label-keyed one. With `complete`, every label
/// must be present; otherwise missing labels read as zero.
pub fn vector(space: &ScenarioSpace, v: &LabelVector, what: &str, complete: bool) -> Result<Vec<f64>> {
    let mut out = vec![0.0; space.len()];
    let mut seen = vec![false; space.len()];
    for (label, &value) in v {
        let w = space.index_of(label).ok_or_else(|| Error::Invalid(format!("{what}: unknown scenario label '{label}'")))?;
        if !value.is_finite() {
            return Err(Error::Invalid(format!("{what}: value at '{label}' is not finite")));
        }
        out[w] = value;
        seen[w] = true;
    }
    if complete {
        if let Some(w) = seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!("{what}: missing scenario label '{}'", space.labels()[w])));
        }
    }
    Ok(out)
}

fn kind(spec: &AcceptanceSpec) -> Result<Option<LawInvariantKind>> {
    Ok(match *spec {
        AcceptanceSpec::Entropic(a) => Some(LawInvariantKind::entropic(a)?),
        AcceptanceSpec::Avar(b) => Some(LawInvariantKind::avar(b)?),
        AcceptanceSpec::Expectation => Some(LawInvariantKind::Expectation),
        AcceptanceSpec::Polyhedral(_) => None,
    })
}

impl Model {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(read_json(path)?)
    }

    pub fn from_file(file: ProblemFile) -> Result<Self> {
        let labels = file.scenarios.labels.clone();
        let space = match &file.scenarios.probs {
            None => ScenarioSpace::uniform_labeled(labels)?,
            Some(p) => {
                let tmp = ScenarioSpace::uniform_labeled(labels.clone())?;
                ScenarioSpace::new(labels, vector(&tmp, p, "scenario probabilities", true)?)?
            }
        };
        if file.agents.is_empty() {
            return Err(Error::Invalid("at least one agent is required".into()));
        }
        let mut names: Vec<String> = Vec::new();
        for a in &file.agents {
            if names.contains(&a.name) {
                return Err(Error::Invalid(format!("duplicate agent name '{}'", a.name)));
            }
            names.push(a.name.clone());
        }
        let density = match file.pricing.as_ref().and_then(|p| p.density.as_ref()) {
            Some(d) => Some(vector(&space, d, "pricing density", true)?),
            None => None,
        };
        let scale = file.pricing.as_ref().map_or(1.0, |p| p.scale);
        let regimes = file
            .agents
            .iter()
            .map(|a| build_agent(&space, a, density.as_deref(), scale))
            .collect::<Result<Vec<_>>>()?;
        let system = AgentSystem::new(regimes)?;

        let kinds = file.agents.iter().map(|a| kind(&a.acceptance)).collect::<Result<Option<Vec<_>>>>()?;
        let lawinv = match (kinds, &density) {
            (Some(kinds), Some(q)) if file.agents.iter().all(|a| a.support.is_none()) => {
                let bases = system.regimes().iter().map(|r| r.market().basis().to_vec()).collect();
                Some(LawInvProblem::new(space.clone(), kinds, bases, scale, q.clone())?)
            }
            _ => None,
        };
        if let Some(e) = &file.endowments {
            for name in e.keys() {
                if !names.contains(name) {
                    return Err(Error::Invalid(format!("endowment for unknown agent '{name}'")));
                }
            }
        }
        Ok(Self { space, names, system, lawinv, file })
    }

    /// Agent by name, or by its one-based position.
    pub fn agent(&self, sel: &str) -> Result<usize> {
        if let Some(i) = self.names.iter().position(|n| n == sel) {
            return Ok(i);
        }
        match sel.parse::<usize>() {
            Ok(i) if i >= 1 && i <= self.names.len() => Ok(i - 1),
            _ => Err(Error::Invalid(format!("no agent '{sel}' (names or positions 1..={})", self.names.len()))),
        }
    }

    pub fn endowments(&self, arg: Option<&str>) -> Result<Vec<Vec<f64>>> {
        let map: BTreeMap<String, LabelVector> = match arg {
            Some(a) => inline_or_file(a)?,
            None => self.file.endowments.clone().ok_or_else(|| Error::Invalid("no endowments given".into()))?,
        };
        if let Some(k) = map.keys().find(|k| !self.names.contains(k)) {
            return Err(Error::Invalid(format!("endowment for unknown agent '{k}'")));
        }
        self.names
            .iter()
            .map(|n| {
                let v = map.get(n).ok_or_else(|| Error::Invalid(format!("no endowment for agent '{n}'")))?;
                vector(&self.space, v, &format!("endowment of '{n}'"), true)
            })
            .collect()
    }

    pub fn loss(&self, arg: Option<&str>) -> Result<Vec<f64>> {
        let v: LabelVector = match arg {
            Some(a) => inline_or_file(a)?,
            None => self.file.loss.clone().ok_or_else(|| Error::Invalid("no loss given".into()))?,
        };
        vector(&self.space, &v, "loss", true)
    }

    pub fn split_problem(&self) -> Result<SplitProblem> {
        let spec = self.file.split.as_ref().ok_or_else(|| Error::Invalid("the problem has no split section".into()))?;
        let cost = match &spec.cost {
            CostSpec::Linear(rate) => Cost::Linear { rate: *rate },
            CostSpec::Step { width, height } => Cost::Step { width: *width, height: *height },
            CostSpec::Table { values, tail_rate } => Cost::Table { values: values.clone(), tail_rate: *tail_rate },
        };
        let factory = match &spec.subsidiaries {
            Subsidiaries::Agents(s) if s == "agents" => RegimeFactory::Repeating(self.system.regimes().to_vec()),
            Subsidiaries::Agents(s) => return Err(Error::Invalid(format!("unknown subsidiaries '{s}'"))),
            Subsidiaries::LawInvariant(specs) => {
                let kinds = specs
                    .iter()
                    .map(|s| kind(s)?.ok_or_else(|| Error::Invalid("split subsidiaries must be law-invariant".into())))
                    .collect::<Result<Vec<_>>>()?;
                let scale = self.file.pricing.as_ref().map_or(1.0, |p| p.scale);
                RegimeFactory::LawInvariant { space: self.space.clone(), kinds, scale }
            }
        };
        let mut p = SplitProblem::new(factory, cost, spec.n_max)?;
        if let Some(r) = &spec.reference_price {
            p = p.with_reference_price(Functional::from_weights(
                self.space.clone(),
                &vector(&self.space, r, "reference price", true)?,
            )?);
        }
        Ok(p)
    }
}

fn build_agent(space: &Arc<ScenarioSpace>, a: &AgentSpec, density: Option<&[f64]>, scale: f64) -> Result<RiskMeasurementRegime> {
    let what = |s: &str| format!("agent '{}': {s}", a.name);
    let support = match &a.support {
        None => SupportMask::full(space.clone()),
        Some(labels) => {
            let idx = labels
                .iter()
                .map(|l| space.index_of(l).ok_or_else(|| Error::Invalid(what(&format!("unknown support label '{l}'")))))
                .collect::<Result<Vec<_>>>()?;
            SupportMask::from_indices(space.clone(), &idx)?
        }
    };
    let specs = a.securities.clone().unwrap_or_else(|| {
        vec![SecuritySpec { payoff: space.labels().iter().map(|l| (l.clone(), 1.0)).collect(), price: None }]
    });
    let mut basis = Vec::new();
    let mut prices = Vec::new();
    for (k, s) in specs.iter().enumerate() {
        let z = vector(space, &s.payoff, &what(&format!("security {k}")), false)?;
        let price = match (s.price, density) {
            (Some(p), _) => p,
            (None, Some(q)) => scale * space.probs().iter().zip(q).zip(&z).map(|((p, d), v)| p * d * v).sum::<f64>(),
            (None, None) if specs.len() == 1 && a.securities.is_none() => scale,
            (None, None) => return Err(Error::Invalid(what(&format!("security {k} has no price and no pricing density is given")))),
        };
        basis.push(z);
        prices.push(price);
    }
    let market = SecurityMarket::new(space.clone(), basis, prices)?;
    let acceptance = match &a.acceptance {
        AcceptanceSpec::Polyhedral(cs) => {
            let mut fs = Vec::new();
            let mut bs = Vec::new();
            for (k, c) in cs.iter().enumerate() {
                let f = match (&c.density, &c.weights) {
                    (Some(d), None) => Functional::new(space.clone(), vector(space, d, &what(&format!("constraint {k}")), false)?)?,
                    (None, Some(w)) => {
                        Functional::from_weights(space.clone(), &vector(space, w, &what(&format!("constraint {k}")), false)?)?
                    }
                    _ => return Err(Error::Invalid(what(&format!("constraint {k} needs exactly one of density or weights")))),
                };
                fs.push(f);
                bs.push(c.bound);
            }
            AcceptanceSet::Polyhedral(PolyhedralAcceptanceSet::new(fs, bs)?)
        }
        other => AcceptanceSet::LawInvariant(kind(other)?.expect("law-invariant spec")),
    };
    RiskMeasurementRegime::new(acceptance, market, support).map_err(|e| match e {
        Error::Invalid(m) => Error::Invalid(what(&m)),
        other => other,
    })
}
