#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use riskshare::linprog::{LpModel, LpStatus, Relation, Sense};
use riskshare::market::AgentSystem;
use riskshare::regime::{AcceptanceSet, LawInvariantKind, PolyhedralAcceptanceSet, RiskMeasurementRegime, SecurityMarket};
use riskshare::{Functional, ScenarioSpace, SupportMask};

pub fn unit(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
}

/// Three singleton scenarios A, B, C; agent 1 covers A, B with tolerances
/// `k1`, agent 2 covers B, C with `k2`, each trading the indicators it covers at price one.
pub fn shared_scenario(k1: [f64; 2], k2: [f64; 2]) -> AgentSystem {
    let sp = ScenarioSpace::uniform_labeled(vec!["A".into(), "B".into(), "C".into()]).unwrap();
    let agent = |idx: [usize; 2], k: [f64; 2]| {
        let acc = PolyhedralAcceptanceSet::pointwise_upper(&sp, &idx, &k).unwrap();
        let m = SecurityMarket::new(sp.clone(), idx.iter().map(|&i| unit(3, i)).collect(), vec![1.0, 1.0]).unwrap();
        RiskMeasurementRegime::new(AcceptanceSet::Polyhedral(acc), m, SupportMask::from_indices(sp.clone(), &idx).unwrap())
            .unwrap()
    };
    AgentSystem::new(vec![agent([0, 1], k1), agent([1, 2], k2)]).unwrap()
}

/// `(rho^A, rho^B, rho^C)` for singleton scenarios.
pub fn shared_scenario_terms(k1: [f64; 2], k2: [f64; 2], x: &[f64]) -> [f64; 3] {
    [x[0] - k1[0], x[1] - k1[1] - k2[0], x[2] - k2[1]]
}

/// Three agents on two scenarios sharing cash; each also trades one
/// indicator (the third trades the sure payoff split differently) so that
/// zero-sum reshuffles are worth money.
pub fn nsa_fixture(with_third: bool) -> AgentSystem {
    let sp = ScenarioSpace::uniform_labeled(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let full = SupportMask::full(sp.clone());
    let agent = |extra: usize, price: f64| {
        let acc = PolyhedralAcceptanceSet::pointwise_upper(&sp, &[0, 1, 2], &[0.0; 3]).unwrap();
        let m = SecurityMarket::new(sp.clone(), vec![vec![1.0; 3], unit(3, extra)], vec![1.0, price]).unwrap();
        RiskMeasurementRegime::new(AcceptanceSet::Polyhedral(acc), m, full.clone()).unwrap()
    };
    let mut rs = vec![agent(0, 0.2), agent(1, 0.3)];
    if with_third {
        rs.push(agent(2, 0.6));
    }
    AgentSystem::new(rs).unwrap()
}

pub fn random_space(rng: &mut ChaCha8Rng, n: usize) -> Arc<ScenarioSpace> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let s: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let rest: f64 = probs[1..].iter().sum();
    probs[0] = 1.0 - rest;
    ScenarioSpace::new((0..n).map(|i| format!("s{i}")).collect(), probs).unwrap()
}

/// Positive density with mean one under `sp`.
pub fn random_density(rng: &mut ChaCha8Rng, sp: &ScenarioSpace, lo: f64, hi: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..sp.len()).map(|_| rng.gen_range(lo..hi)).collect();
    let m = sp.mean(&raw);
    raw.iter().map(|v| v / m).collect()
}

/// Agents with full support, pointwise upper bounds plus one random
/// expectation constraint, trading cash and (optionally) one random payoff,
/// all priced by the common density `q`. With `normalized`, every bound is zero.
pub fn random_polyhedral(
    rng: &mut ChaCha8Rng,
    agents: usize,
    scenarios: usize,
    extra_security: bool,
    normalized: bool,
) -> (AgentSystem, Vec<f64>) {
    let sp = random_space(rng, scenarios);
    let q = random_density(rng, &sp, 0.5, 1.5);
    let rs = (0..agents).map(|_| random_polyhedral_regime(rng, &sp, &q, extra_security, normalized)).collect();
    (AgentSystem::new(rs).unwrap(), q)
}

pub fn random_polyhedral_regime(
    rng: &mut ChaCha8Rng,
    sp: &Arc<ScenarioSpace>,
    q: &[f64],
    extra_security: bool,
    normalized: bool,
) -> RiskMeasurementRegime {
    let n = sp.len();
    let mut fs: Vec<Functional> = (0..n).map(|w| Functional::point(sp.clone(), w)).collect();
    let mut bs: Vec<f64> = (0..n).map(|_| if normalized { 0.0 } else { rng.gen_range(0.0..2.0) }).collect();
    fs.push(Functional::new(sp.clone(), random_density(rng, sp, 0.2, 2.0)).unwrap());
    bs.push(if normalized { 0.0 } else { rng.gen_range(0.0..1.0) });
    let acc = PolyhedralAcceptanceSet::new(fs, bs).unwrap();
    let mut basis = vec![vec![1.0; n]];
    if extra_security {
        basis.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let m = SecurityMarket::priced_by(sp.clone(), basis, 1.0, q).unwrap();
    RiskMeasurementRegime::new(AcceptanceSet::Polyhedral(acc), m, SupportMask::full(sp.clone())).unwrap()
}

/// Law-invariant regime trading cash and one random payoff priced by `q`.
pub fn law_invariant_regime(
    rng: &mut ChaCha8Rng,
    sp: &Arc<ScenarioSpace>,
    kind: LawInvariantKind,
    q: &[f64],
) -> RiskMeasurementRegime {
    let b: Vec<f64> = (0..sp.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = SecurityMarket::priced_by(sp.clone(), vec![vec![1.0; sp.len()], b], 1.0, q).unwrap();
    RiskMeasurementRegime::law_invariant(kind, m).unwrap()
}

// Independent reference implementations used as oracles.

pub fn ref_entropic(alpha: f64, probs: &[f64], x: &[f64]) -> f64 {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let s: f64 = probs.iter().zip(x).map(|(p, v)| p * (alpha * (v - m)).exp()).sum();
    m + s.ln() / alpha
}

/// `min_t t + E[(X - t)^+] / (1 - beta)`; the minimum sits at a value of `X`.
pub fn ref_avar(beta: f64, probs: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .map(|&t| t + probs.iter().zip(x).map(|(p, v)| p * (v - t).max(0.0)).sum::<f64>() / (1.0 - beta))
        .fold(f64::INFINITY, f64::min)
}

pub fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Grid scan on `[a, b]` followed by golden refinement around the best cell.
pub fn grid_min(f: &dyn Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> (f64, f64) {
    let h = (b - a) / cells as f64;
    let (k, _) = (0..=cells)
        .map(|k| (k, f(a + k as f64 * h)))
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let lo = a + (k as f64 - 1.0).max(0.0) * h;
    let hi = a + (k as f64 + 1.0).min(cells as f64) * h;
    golden(f, lo, hi, 120)
}

/// `sup_X phi(X) - Lambda(X)` for a polyhedral system by one linear program
/// over all agents' parts and securities.
pub fn ref_market_conjugate(s: &AgentSystem, phi: &[f64]) -> Option<f64> {
    let mut m = LpModel::new();
    for r in s.regimes() {
        let AcceptanceSet::Polyhedral(acc) = r.acceptance() else { panic!("polyhedral fixtures only") };
        let sup = r.support().indices();
        let xs: Vec<usize> = sup.iter().map(|&w| m.free_var(phi[w])).collect();
        let cs: Vec<usize> = r.market().prices().iter().map(|&p| m.free_var(-p)).collect();
        for (f, &b) in acc.functionals().iter().zip(acc.bounds()) {
            let wts = f.weights();
            let mut terms: Vec<(usize, f64)> = sup.iter().zip(&xs).map(|(&w, &v)| (v, wts[w])).collect();
            for (&c, basis) in cs.iter().zip(r.market().basis()) {
                let coef: f64 = sup.iter().map(|&w| -wts[w] * basis[w]).sum();
                terms.push((c, coef));
            }
            m.row(terms, Relation::Le, b);
        }
    }
    let sol = m.build(Sense::Maximize).solve().unwrap();
    match sol.status {
        LpStatus::Optimal => Some(sol.objective),
        LpStatus::Unbounded => None,
        LpStatus::Infeasible => panic!("empty acceptance set"),
    }
}

/// Projects `v` onto the orthogonal complement of `basis` (Euclidean).
pub fn project_out(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for b in basis {
        let mut u = b.clone();
        for o in &ortho {
            let d: f64 = u.iter().zip(o).map(|(a, c)| a * c).sum();
            u.iter_mut().zip(o).for_each(|(a, c)| *a -= d * c);
        }
        let n = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-10 {
            ortho.push(u.iter().map(|a| a / n).collect());
        }
    }
    let mut out = v.to_vec();
    for o in &ortho {
        let d: f64 = out.iter().zip(o).map(|(a, c)| a * c).sum();
        out.iter_mut().zip(o).for_each(|(a, c)| *a -= d * c);
    }
    out
}
