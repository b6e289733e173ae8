//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::io::Write;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskshare::equilibrium::{build_equilibrium, subgradient, verify_equilibrium};
use riskshare::lawinv::{
    entropic_infconv, lambda_two_entropic, lawinv_lambda, relative_entropy, solve_avar_entropic, LawInvProblem,
    LawInvariantKind,
};
use riskshare::market::{lambda_raw, nsa_check, pareto_from_payoff, AgentSystem, Allocation};
use riskshare::oracle::{brute_lambda, fd_subgradient_check, verify_pareto, FdPath, GridSpec};
use riskshare::regime::{AcceptanceSet, PolyhedralAcceptanceSet, RiskMeasurementRegime, SecurityMarket};
use riskshare::splits::{split_optimize, Cost, RegimeFactory, SplitProblem};
use riskshare::{Error, Extended, Functional, ScenarioSpace, SupportMask};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rho(r: &RiskMeasurementRegime, x: &[f64]) -> f64 {
    r.rho_raw(x).unwrap().expect_finite("risk").unwrap()
}

fn rho_sum(s: &AgentSystem, a: &Allocation) -> f64 {
    s.regimes().iter().zip(&a.parts).map(|(r, x)| rho(r, x)).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Two entropic agents; the first trades `1_A` and `1_{A^c}`, the second
/// only `1_A`, priced by `scale * E_Q` with `Q(A) = 1/2`.
fn two_entropic_problem(sp: &std::sync::Arc<ScenarioSpace>, in_a: &[bool], beta: f64, gamma: f64, scale: f64) -> LawInvProblem {
    let n = sp.len();
    let pa: f64 = (0..n).filter(|&i| in_a[i]).map(|i| sp.probs()[i]).sum();
    let q: Vec<f64> = in_a.iter().map(|&a| if a { 0.5 / pa } else { 0.5 / (1.0 - pa) }).collect();
    let ia: Vec<f64> = in_a.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let ic: Vec<f64> = in_a.iter().map(|&a| if a { 0.0 } else { 1.0 }).collect();
    LawInvProblem::new(
        sp.clone(),
        vec![LawInvariantKind::Entropic { alpha: beta }, LawInvariantKind::Entropic { alpha: gamma }],
        vec![vec![ia.clone(), ic], vec![ia]],
        scale,
        q,
    )
    .unwrap()
}

/// AVaR agent trading `1_A`, `1_{A^c}` and entropic agent trading `1_A`,
/// priced by `E_{Q*}` with a blockwise constant `Q*`.
struct AvarEntropicCase {
    beta: f64,
    gamma: f64,
    in_a: Vec<bool>,
    q_star: Vec<f64>,
    x: Vec<f64>,
}

fn avar_entropic_case(rng: &mut ChaCha8Rng) -> AvarEntropicCase {
    let n = 8;
    let k = rng.gen_range(2..7);
    let in_a: Vec<bool> = (0..n).map(|i| i < k).collect();
    let beta = rng.gen_range(0.2..0.8);
    let gamma = rng.gen_range(0.5..2.0);
    let pa = k as f64 / n as f64;
    let lo = (1.0 - (1.0 - pa) / (1.0 - beta)).max(0.0);
    let hi = pa / (1.0 - beta);
    let t = lo + (hi.min(1.0) - lo) * rng.gen_range(0.15..0.85);
    let q_star = in_a.iter().map(|&a| if a { t / pa } else { (1.0 - t) / (1.0 - pa) }).collect();
    AvarEntropicCase { beta, gamma, in_a, q_star, x: uniform_vec(rng, n, -2.0, 2.0) }
}

fn avar_entropic_problem(c: &AvarEntropicCase) -> LawInvProblem {
    let sp = ScenarioSpace::uniform(c.in_a.len()).unwrap();
    let ia: Vec<f64> = c.in_a.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let ic: Vec<f64> = c.in_a.iter().map(|&a| if a { 0.0 } else { 1.0 }).collect();
    LawInvProblem::new(
        sp,
        vec![LawInvariantKind::AVaR { beta: c.beta }, LawInvariantKind::Entropic { alpha: c.gamma }],
        vec![vec![ia.clone(), ic], vec![ia]],
        1.0,
        c.q_star.clone(),
    )
    .unwrap()
}

fn c01_three_scenario_closed_form() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut err_value, mut err_price) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let k1 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let k2 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let x = uniform_vec(&mut rng, 3, -5.0, 5.0);
        let s = shared_scenario(k1, k2);
        let sol = lambda_raw(&s, &x).unwrap().unwrap();
        let [ra, rb, rc] = shared_scenario_terms(k1, k2, &x);
        let closed = ra + rb + rc;
        err_value = err_value.max((sol.value - closed).abs());
        let z = [ra, closed - ra - rc, rc];
        err_price = err_price.max((s.price(&z).unwrap() - closed).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err_value <= 1e-8 && err_price <= 1e-10 && secs < 5.0,
        format!("max |LP - closed form| = {err_value:.2e} (tol 1e-8), max payoff price error = {err_price:.2e} (tol 1e-10), {secs:.2}s (limit 5s)"),
    )
}

fn c02_entropic_convolution() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sp = ScenarioSpace::uniform(8).unwrap();
    let (mut err_id, mut err_split) = (0.0f64, 0.0f64);
    let mut bracket_ok = true;
    let mut worst_gap = 0.0f64;
    for _ in 0..50 {
        let beta = rng.gen_range(0.2..3.0);
        let gamma = rng.gen_range(0.2..3.0);
        let alpha = beta * gamma / (beta + gamma);
        let x = uniform_vec(&mut rng, 8, -1.0, 1.0);
        let r = entropic_infconv(&[beta, gamma], sp.probs(), &x).unwrap();
        let reference = ref_entropic(alpha, sp.probs(), &x);
        err_id = err_id.max((r.value - reference).abs());
        let parts = r.split.apply(&x);
        let split_sum = ref_entropic(beta, sp.probs(), &parts[0]) + ref_entropic(gamma, sp.probs(), &parts[1]);
        err_split = err_split.max((split_sum - r.value).abs());

        // bracket on a loss taking three values: lump equal-loss scenarios
        let levels = uniform_vec(&mut rng, 3, -1.0, 1.0);
        let mut counts = [1usize; 3];
        for _ in 3..8 {
            counts[rng.gen_range(0..3)] += 1;
        }
        let lumped = ScenarioSpace::new(
            (0..3).map(|i| format!("l{i}")).collect(),
            counts.iter().map(|&c| c as f64 / 8.0).collect(),
        )
        .unwrap();
        let full8: Vec<f64> = (0..3).flat_map(|i| std::iter::repeat(levels[i]).take(counts[i])).collect();
        let truth = ref_entropic(alpha, sp.probs(), &full8);
        let cash = |a: f64| {
            RiskMeasurementRegime::law_invariant(LawInvariantKind::Entropic { alpha: a }, SecurityMarket::cash(lumped.clone(), 1.0).unwrap())
                .unwrap()
        };
        let s = AgentSystem::new(vec![cash(beta), cash(gamma)]).unwrap();
        // cash moves freely between the two agents, so one coordinate is fixed
        let center: Vec<f64> = levels.iter().map(|v| 0.5 * v).collect();
        let mut lower: Vec<f64> = center.iter().map(|c| c - 1.0).collect();
        let mut upper: Vec<f64> = center.iter().map(|c| c + 1.0).collect();
        lower[0] = center[0];
        upper[0] = center[0];
        let g = GridSpec::new(lower, upper, 0.02).unwrap();
        let b = brute_lambda(&s, &levels, &g).unwrap();
        bracket_ok &= truth <= b.estimate + 1e-9 && b.estimate <= truth + b.omega;
        worst_gap = worst_gap.max(b.estimate - truth);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err_id <= 1e-8 && err_split <= 1e-8 && bracket_ok && secs < 30.0,
        format!(
            "max identity error {err_id:.2e}, split error {err_split:.2e} (tol 1e-8); grid bracket {} (worst excess {worst_gap:.2e}, omega 0.02 at h = 0.02); {secs:.2}s (limit 30s)",
            if bracket_ok { "holds" } else { "violated" }
        ),
    )
}

fn c03_two_entropic_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut err_oracle, mut err_accept, mut err_sum, mut err_solver) = (0.0f64, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let sp = random_space(&mut rng, 8);
        let k = rng.gen_range(1..8);
        let in_a: Vec<bool> = (0..8).map(|i| i < k).collect();
        let beta = rng.gen_range(0.3..3.0);
        let gamma = rng.gen_range(0.3..3.0);
        let scale = rng.gen_range(0.5..2.0);
        let alpha = beta * gamma / (beta + gamma);
        let x = uniform_vec(&mut rng, 8, -2.0, 2.0);
        let sol = lambda_two_entropic(scale, beta, gamma, &in_a, sp.probs(), &x).unwrap();
        let shifted = |r: f64| -> Vec<f64> { x.iter().zip(&in_a).map(|(v, &a)| v - if a { r } else { -r }).collect() };
        let (_, m) = golden(&|r| ref_entropic(alpha, sp.probs(), &shifted(r)), -20.0, 20.0, 200);
        err_oracle = err_oracle.max((sol.value - scale * m).abs());
        let a1: Vec<f64> =
            sol.allocation.parts[0].iter().zip(&in_a).map(|(v, &a)| v - sol.cash - if a { sol.r } else { -sol.r }).collect();
        err_accept = err_accept.max(ref_entropic(beta, sp.probs(), &a1)).max(ref_entropic(gamma, sp.probs(), &sol.allocation.parts[1]));
        err_sum = err_sum.max(sol.allocation.residual(&x));
        let p = two_entropic_problem(&sp, &in_a, beta, gamma, scale);
        err_solver = err_solver.max((lawinv_lambda(&p, &x).unwrap().value - sol.value).abs());
    }
    outcome(
        err_oracle <= 1e-6 && err_accept <= 1e-8 && err_sum <= 1e-12 && err_solver <= 1e-8,
        format!(
            "max |closed form - golden search| = {err_oracle:.2e} (tol 1e-6), max part risk {err_accept:.2e} (tol 1e-8), max sum error {err_sum:.2e} (tol 1e-12), general solver gap {err_solver:.2e} (tol 1e-8)"
        ),
    )
}

/// `min_s min_z AVaR((Y_s - z)^+) + entropic(Y_s ^ z)` with `Y_s = X - s N`.
fn avar_entropic_oracle(c: &AvarEntropicCase) -> f64 {
    let n = c.x.len();
    let probs = vec![1.0 / n as f64; n];
    let qa: f64 = (0..n).filter(|&i| c.in_a[i]).map(|i| probs[i] * c.q_star[i]).sum();
    let r = qa / (1.0 - qa);
    let pooled = |y: &[f64]| -> f64 {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0;
        let f = |z: f64| {
            let up: Vec<f64> = y.iter().map(|v| (v - z).max(0.0)).collect();
            let dn: Vec<f64> = y.iter().map(|v| v.min(z)).collect();
            ref_avar(c.beta, &probs, &up) + ref_entropic(c.gamma, &probs, &dn)
        };
        grid_min(&f, lo, hi, 400).1
    };
    let outer = |s: f64| {
        let y: Vec<f64> = c.x.iter().zip(&c.in_a).map(|(v, &a)| v - s * if a { 1.0 } else { -r }).collect();
        pooled(&y)
    };
    grid_min(&outer, -30.0, 30.0, 300).1
}

fn c04_avar_entropic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut err, mut worst_avar, mut worst_ent) = (0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..10 {
        let c = avar_entropic_case(&mut rng);
        let probs = vec![0.125; 8];
        let sol = solve_avar_entropic(c.beta, c.gamma, &c.in_a, &c.q_star, &probs, &c.x).unwrap();
        err = err.max((sol.value - avar_entropic_oracle(&c)).abs());
        let a1: Vec<f64> = sol.allocation.parts[0]
            .iter()
            .zip(&c.in_a)
            .map(|(v, &a)| v - sol.value + if a { 0.0 } else { sol.s * sol.r })
            .collect();
        let a2: Vec<f64> = sol.allocation.parts[1].iter().zip(&c.in_a).map(|(v, &a)| v - if a { sol.s } else { 0.0 }).collect();
        worst_avar = worst_avar.max(ref_avar(c.beta, &probs, &a1));
        worst_ent = worst_ent.max(ref_entropic(c.gamma, &probs, &a2));
    }
    outcome(
        err <= 2e-4 && worst_avar <= 1e-6 && worst_ent <= 1e-6,
        format!("max |dual solve - grid oracle| = {err:.2e} (tol 2e-4), max AVaR part {worst_avar:.2e}, max entropic part {worst_ent:.2e} (tol 1e-6)"),
    )
}

fn c05_pareto() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut err = 0.0f64;
    let mut all_pareto = true;
    let mut checked = 0;
    let mut check = |s: &AgentSystem, x: &[f64], radius: f64, h: f64, err: &mut f64, all: &mut bool| {
        let sol = lambda_raw(s, x).unwrap().unwrap();
        let from_payoff = pareto_from_payoff(s, x, &sol.payoff, 1e-9).unwrap();
        for a in [&sol.allocation, &from_payoff] {
            *err = err.max((rho_sum(s, a) - sol.value).abs());
            let g = GridSpec::around(&a.parts[0], radius, h).unwrap();
            *all &= verify_pareto(s, x, a, &g).unwrap().pareto;
            checked += 1;
        }
    };
    for _ in 0..10 {
        let k1 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let k2 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let x = uniform_vec(&mut rng, 3, -5.0, 5.0);
        check(&shared_scenario(k1, k2), &x, 1.0, 0.05, &mut err, &mut all_pareto);
    }
    for _ in 0..10 {
        let (s, _) = random_polyhedral(&mut rng, 2, 3, true, false);
        let x = uniform_vec(&mut rng, 3, -3.0, 3.0);
        check(&s, &x, 0.5, 0.1, &mut err, &mut all_pareto);
    }
    outcome(
        err <= 1e-8 && all_pareto,
        format!("max |sum of risks - market risk| = {err:.2e} (tol 1e-8); grid dominance search found {} on {checked} allocations", if all_pareto { "no improvement" } else { "an improvement" }),
    )
}

fn c06_nsa() -> Outcome {
    let three = nsa_fixture(true);
    let c3 = nsa_check(&three).unwrap();
    let unbounded = matches!(lambda_raw(&three, &[0.0; 3]), Err(Error::Contract(_)));
    let two = nsa_fixture(false);
    let c2 = nsa_check(&two).unwrap();
    let at_zero = lambda_raw(&two, &[0.0; 3]).unwrap().map(|s| s.value);
    let ok = c3.dim == 3 && !c3.holds && c3.lp_unbounded && unbounded && c3.consistent()
        && c2.dim < 2 && c2.holds && !c2.lp_unbounded && c2.consistent()
        && at_zero.is_some_and(|v| v.abs() <= 1e-12);
    outcome(
        ok,
        format!(
            "three agents: dim {} , LP unbounded {}, market LP unbounded {unbounded}; two agents: dim {}, LP unbounded {}, market risk at zero {:?}",
            c3.dim, c3.lp_unbounded, c2.dim, c2.lp_unbounded, at_zero
        ),
    )
}

fn c07_equilibria() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut budget, mut opt, mut price) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..50 {
        let agents = rng.gen_range(2..4);
        let scen = rng.gen_range(3..5);
        let (s, _) = random_polyhedral(&mut rng, agents, scen, true, false);
        let w: Vec<Vec<f64>> = (0..agents).map(|_| uniform_vec(&mut rng, scen, -3.0, 3.0)).collect();
        let eq = build_equilibrium(&s, &w).unwrap();
        let rep = verify_equilibrium(&s, &w, &eq).unwrap();
        if !rep.passed() {
            failures += 1;
        }
        for c in &rep.checks {
            let v = c.value.unwrap_or(f64::INFINITY).abs();
            if c.name.starts_with("budget.") {
                budget = budget.max(v);
            } else if c.name.starts_with("optimal.") {
                opt = opt.max(v);
            } else if c.name == "price.consistent" {
                price = price.max(v);
            }
        }
    }
    outcome(
        failures == 0 && budget <= 1e-8 && opt <= 1e-6 && price <= 1e-8,
        format!("{failures} failing reports; max budget gap {budget:.2e} (tol 1e-8), max optimality gap {opt:.2e} (tol 1e-6), max mispricing {price:.2e} (tol 1e-8)"),
    )
}

fn axioms(family: &str, rng: &mut ChaCha8Rng, make: &dyn Fn(&mut ChaCha8Rng) -> RiskMeasurementRegime) -> (bool, String) {
    let mut worst = [0.0f64; 4];
    for _ in 0..1000 {
        let r = make(rng);
        let n = r.space().len();
        let x = uniform_vec(rng, n, -3.0, 3.0);
        let y = uniform_vec(rng, n, -3.0, 3.0);
        let coeffs = uniform_vec(rng, r.market().dim(), -2.0, 2.0);
        let z = r.market().payoff(&coeffs);
        let xz: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let (rx, ry) = (rho(&r, &x), rho(&r, &y));
        worst[0] = worst[0].max((rho(&r, &xz) - rx - r.market().price_of_coeffs(&coeffs)).abs());
        let lower: Vec<f64> = x.iter().map(|v| v - rng.gen_range(0.0..2.0)).collect();
        worst[1] = worst[1].max(rho(&r, &lower) - rx);
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        worst[2] = worst[2].max(rho(&r, &mid) - 0.5 * (rx + ry));
        worst[3] = worst[3].max(rho(&r, &vec![0.0; n]).abs());
    }
    let ok = worst.iter().all(|&w| w <= 1e-8);
    (ok, format!("{family}: additivity {:.1e}, monotonicity {:.1e}, convexity {:.1e}, normalization {:.1e}", worst[0], worst[1], worst[2], worst[3]))
}

fn c08_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let poly = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(3..5);
        let sp = random_space(rng, n);
        let q = random_density(rng, &sp, 0.5, 1.5);
        random_polyhedral_regime(rng, &sp, &q, true, true)
    };
    let entropic = |rng: &mut ChaCha8Rng| {
        let sp = random_space(rng, 4);
        let a = rng.gen_range(0.2..3.0);
        law_invariant_regime(rng, &sp, LawInvariantKind::Entropic { alpha: a }, &vec![1.0; 4])
    };
    let avar = |rng: &mut ChaCha8Rng| {
        let sp = random_space(rng, 4);
        let b = rng.gen_range(0.7..0.95);
        let q = random_density(rng, &sp, 0.5, 1.5);
        law_invariant_regime(rng, &sp, LawInvariantKind::AVaR { beta: b }, &q)
    };
    let expectation = |rng: &mut ChaCha8Rng| {
        let sp = random_space(rng, 4);
        law_invariant_regime(rng, &sp, LawInvariantKind::Expectation, &vec![1.0; 4])
    };
    let results = [
        axioms("polyhedral", &mut rng, &poly),
        axioms("entropic", &mut rng, &entropic),
        axioms("AVaR", &mut rng, &avar),
        axioms("expectation", &mut rng, &expectation),
    ];
    outcome(
        results.iter().all(|r| r.0),
        format!("worst violations over 1000 trials (tol 1e-8): {}", results.iter().map(|r| r.1.clone()).collect::<Vec<_>>().join("; ")),
    )
}

fn c09_conjugates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fixtures = vec![shared_scenario([1.0, 2.0], [1.0, 3.0]), nsa_fixture(false)];
    for agents in [2, 3, 2] {
        fixtures.push(random_polyhedral(&mut rng, agents, 4, true, false).0);
    }
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    let mut finite = 0;
    for s in &fixtures {
        let n = s.space().len();
        let bases: Vec<Vec<f64>> = s.regimes().iter().flat_map(|r| r.market().basis().to_vec()).collect();
        // a consistent price: the pricing weights of the first agent's market
        // solved on the pooled securities
        let base = consistent_weights(s);
        for k in 0..20 {
            let w: Vec<f64> = if k % 2 == 0 {
                uniform_vec(&mut rng, n, 0.0, 1.0)
            } else {
                let v = project_out(&uniform_vec(&mut rng, n, -1.0, 1.0), &bases);
                let t = rng.gen_range(0.0..0.2);
                base.iter().zip(&v).map(|(b, d)| b + t * d).collect()
            };
            let phi = Functional::from_weights(s.space().clone(), &w).unwrap();
            let mut sum = Extended::Finite(0.0);
            for r in s.regimes() {
                sum = match (sum, r.conjugate(&phi).unwrap()) {
                    (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
                    _ => Extended::Infinite,
                };
            }
            match (sum, ref_market_conjugate(s, &w)) {
                (Extended::Finite(a), Some(b)) => {
                    finite += 1;
                    worst = worst.max((a - b).abs());
                }
                (Extended::Infinite, None) => {}
                _ => mismatched += 1,
            }
        }
    }
    // entropic pair: the conjugate of the convolution at a density q is
    // attained at log(q) / alpha and equals the sum of the penalties
    let sp = random_space(&mut rng, 6);
    let mut worst_ent = 0.0f64;
    for _ in 0..20 {
        let (b, g) = (rng.gen_range(0.3..3.0), rng.gen_range(0.3..3.0));
        let alpha = b * g / (b + g);
        let q = random_density(&mut rng, &sp, 0.2, 2.0);
        let xs: Vec<f64> = q.iter().map(|v| v.ln() / alpha).collect();
        let at: f64 = sp.probs().iter().zip(&q).zip(&xs).map(|((p, d), x)| p * d * x).sum::<f64>() - ref_entropic(alpha, sp.probs(), &xs);
        let h = relative_entropy(sp.probs(), &q);
        worst_ent = worst_ent.max((at - (h / b + h / g)).abs());
    }
    outcome(
        worst <= 1e-6 && mismatched == 0 && worst_ent <= 1e-6,
        format!("polyhedral: {finite} finite points, max gap {worst:.2e}, {mismatched} finiteness mismatches; entropic pair max gap {worst_ent:.2e} (tol 1e-6)"),
    )
}

/// Scenario weights pricing every security of the system correctly.
fn consistent_weights(s: &AgentSystem) -> Vec<f64> {
    let lam = lambda_raw(s, &vec![0.0; s.space().len()]).unwrap().unwrap();
    lam.subgradient
}

fn c10_splits() -> Outcome {
    let start = Instant::now();
    let sp = ScenarioSpace::uniform(2).unwrap();
    let x = [0.0, 2.0];
    let p = SplitProblem::new(RegimeFactory::identical_entropic(sp.clone(), 1.0).unwrap(), Cost::Linear { rate: 0.1 }, 50).unwrap();
    let r = split_optimize(&p, &x).unwrap();
    let sweep: Vec<f64> = (1..=50).map(|n| ref_entropic(1.0 / n as f64, sp.probs(), &x) + 0.1 * n as f64).collect();
    let argmin = sweep.iter().enumerate().fold(0, |b, (i, v)| if *v < sweep[b] { i } else { b }) + 1;
    let lambdas: Vec<f64> = (1..=50).map(|n| ref_entropic(1.0 / n as f64, sp.probs(), &x)).collect();
    let sweep_monotone = lambdas.windows(2).all(|w| w[0] >= w[1] - 1e-8);
    let traj_monotone = r.trajectory.windows(2).all(|w| w[0].lambda >= w[1].lambda - 1e-8);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.n_star == argmin && sweep_monotone && traj_monotone && (r.objective - sweep[argmin - 1]).abs() <= 1e-8 && secs < 10.0,
        format!("n* = {} (sweep argmin {argmin}), objective {:.6}, {} sizes evaluated, monotone {}, {secs:.2}s (limit 10s)", r.n_star, r.objective, r.trajectory.len(), sweep_monotone && traj_monotone),
    )
}

fn c11_stability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let steps = 20;
    let dt = 0.1 / steps as f64;
    let mut worst_ratio = 0.0f64;
    let mut fitted = 0.0f64;
    for seg in 0..20 {
        let problem = if seg % 2 == 0 {
            let sp = random_space(&mut rng, 8);
            let k = rng.gen_range(2..7);
            let in_a: Vec<bool> = (0..8).map(|i| i < k).collect();
            two_entropic_problem(&sp, &in_a, rng.gen_range(0.3..3.0), rng.gen_range(0.3..3.0), 1.0)
        } else {
            avar_entropic_problem(&avar_entropic_case(&mut rng))
        };
        let x = uniform_vec(&mut rng, 8, -2.0, 2.0);
        let d = uniform_vec(&mut rng, 8, -1.0, 1.0);
        let dn = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let path: Vec<_> = (0..=steps)
            .map(|k| {
                let t = k as f64 * dt;
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                lawinv_lambda(&problem, &y).unwrap()
            })
            .collect();
        for w in path.windows(2) {
            fitted = fitted.max((w[1].value - w[0].value).abs() / (dn * dt));
            let jump = w[0]
                .allocation
                .parts
                .iter()
                .zip(&w[1].allocation.parts)
                .map(|(a, b)| max_abs_diff(a, b))
                .fold(0.0, f64::max);
            worst_ratio = worst_ratio.max(jump / (dn * dt));
        }
    }
    outcome(
        fitted.is_finite() && worst_ratio <= 10.0,
        format!("fitted Lipschitz constant {fitted:.3}; largest allocation jump {worst_ratio:.3} x |D| dt (limit 10)"),
    )
}

fn c12_subgradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_rel = 0.0f64;
    let mut smooth_ok = true;
    for _ in 0..5 {
        let sp = random_space(&mut rng, 6);
        let in_a: Vec<bool> = (0..6).map(|i| i < 3).collect();
        let p = two_entropic_problem(&sp, &in_a, rng.gen_range(0.3..3.0), rng.gen_range(0.3..3.0), rng.gen_range(0.5..2.0));
        let x = uniform_vec(&mut rng, 6, -2.0, 2.0);
        let phi = lawinv_lambda(&p, &x).unwrap().subgradient;
        let f = |y: &[f64]| lawinv_lambda(&p, y).ok().map(|s| s.value);
        let c = fd_subgradient_check(&f, &x, &phi, 1e-4, 100, 0).unwrap();
        smooth_ok &= c.path == FdPath::Smooth && c.passed;
        worst_rel = worst_rel.max(c.error);
    }
    // market risk max_w (X_w - K_w) at points where two scenarios tie
    let mut worst_ineq = 0.0f64;
    let mut kink_ok = true;
    for _ in 0..5 {
        let sp = ScenarioSpace::uniform(3).unwrap();
        let k1 = uniform_vec(&mut rng, 3, -1.0, 1.0);
        let k2 = uniform_vec(&mut rng, 3, -1.0, 1.0);
        let agent = |k: &[f64]| {
            let acc = PolyhedralAcceptanceSet::pointwise_upper(&sp, &[0, 1, 2], k).unwrap();
            RiskMeasurementRegime::new(AcceptanceSet::Polyhedral(acc), SecurityMarket::cash(sp.clone(), 1.0).unwrap(), SupportMask::full(sp.clone()))
                .unwrap()
        };
        let s = AgentSystem::new(vec![agent(&k1), agent(&k2)]).unwrap();
        let t = rng.gen_range(-1.0..1.0);
        let x: Vec<f64> = [t, t, t - 1.0].iter().zip(k1.iter().zip(&k2)).map(|(v, (a, b))| v + a + b).collect();
        let (phi, _) = subgradient(&s, &x).unwrap();
        let f = |y: &[f64]| lambda_raw(&s, y).ok().flatten().map(|l| l.value);
        let c = fd_subgradient_check(&f, &x, &phi.weights(), 1e-4, 100, 3).unwrap();
        kink_ok &= c.path == FdPath::Kink && c.passed;
        worst_ineq = worst_ineq.max(c.error);
    }
    outcome(
        smooth_ok && worst_rel <= 1e-4 && kink_ok && worst_ineq <= 1e-8,
        format!("entropic max relative error {worst_rel:.2e} (tol 1e-4); polyhedral kinks worst inequality violation {worst_ineq:.2e} over 100 points each (tol 1e-8)"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("three-scenario closed form", c01_three_scenario_closed_form),
        ("entropic convolution identity", c02_entropic_convolution),
        ("two entropic agents, closed form", c03_two_entropic_closed_form),
        ("AVaR and entropic agents", c04_avar_entropic),
        ("Pareto certification", c05_pareto),
        ("no-scalable-arbitrage dichotomy", c06_nsa),
        ("equilibria", c07_equilibria),
        ("risk measure axioms", c08_axioms),
        ("conjugate of the market risk", c09_conjugates),
        ("optimal splits", c10_splits),
        ("selection stability", c11_stability),
        ("subgradients vs finite differences", c12_subgradients),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        // written straight to stdout so the lines survive output capture
        writeln!(out, "criterion {:2} {} {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail).unwrap();
        if !o.passed {
            failed.push(i + 1);
        }
    }
    out.flush().unwrap();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
