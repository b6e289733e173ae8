//! Exhaustive baselines for small instances: grid search over two-agent
//! allocations, Pareto dominance probes and finite-difference gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{dim_check, Error, Result};
use crate::market::{AgentSystem, Allocation};
use crate::scenario::Extended;

pub const MAX_GRID_POINTS: u64 = 10_000_000;
pub const MAX_SCENARIOS: usize = 4;
pub const FD_STEP: f64 = 1e-5;

/// Box and spacing for the first agent's part; the second agent receives
/// the remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, h: f64) -> Result<Self> {
        dim_check("grid upper bounds", upper.len(), lower.len())?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Invalid("grid spacing must be positive".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::Invalid("grid bounds must be finite and ordered".into()));
        }
        Ok(Self { lower, upper, h })
    }

    pub fn around(center: &[f64], radius: f64, h: f64) -> Result<Self> {
        Self::new(center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect(), h)
    }

    fn steps(&self, w: usize) -> u64 {
        ((self.upper[w] - self.lower[w]) / self.h + 1e-9).floor() as u64 + 1
    }

    /// Number of grid points over the given coordinates, refusing grids
    /// above [`MAX_GRID_POINTS`].
    pub fn size(&self, coords: &[usize]) -> Result<u64> {
        let mut total: u64 = 1;
        for &w in coords {
            total = total.saturating_mul(self.steps(w));
            if total > MAX_GRID_POINTS {
                return Err(Error::Invalid(format!("grid exceeds {MAX_GRID_POINTS} points")));
            }
        }
        Ok(total)
    }
}

/// Two-agent layout: coordinates the first agent may vary, and the part
/// each agent must hold on the scenarios only it covers.
struct Layout {
    free: Vec<usize>,
    base: Vec<f64>,
}

fn layout(s: &AgentSystem, x: &[f64]) -> Result<Layout> {
    if s.len() != 2 {
        return Err(Error::Unsupported("grid search handles exactly two agents".into()));
    }
    if s.space().len() > MAX_SCENARIOS {
        return Err(Error::Unsupported(format!("grid search handles at most {MAX_SCENARIOS} scenarios")));
    }
    dim_check("loss", x.len(), s.space().len())?;
    let (a, b) = (s.regimes()[0].support(), s.regimes()[1].support());
    let mut free = Vec::new();
    let mut base = vec![0.0; x.len()];
    for w in 0..x.len() {
        match (a.contains(w), b.contains(w)) {
            (true, true) => free.push(w),
            (true, false) => base[w] = x[w],
            _ => {}
        }
    }
    Ok(Layout { free, base })
}

fn point(g: &GridSpec, lay: &Layout, mut k: u64) -> Vec<f64> {
    let mut p = lay.base.clone();
    for &w in &lay.free {
        let m = g.steps(w);
        p[w] = g.lower[w] + (k % m) as f64 * g.h;
        k /= m;
    }
    p
}

fn risk(s: &AgentSystem, i: usize, y: &[f64]) -> f64 {
    match s.regimes()[i].rho_raw(y) {
        Ok(Extended::Finite(v)) => v,
        _ => f64::INFINITY,
    }
}

fn pair(s: &AgentSystem, x: &[f64], x1: &[f64]) -> (f64, f64) {
    let x2: Vec<f64> = x.iter().zip(x1).map(|(a, b)| a - b).collect();
    (risk(s, 0, x1), risk(s, 1, &x2))
}

#[derive(Debug, Clone)]
pub struct BruteLambda {
    /// Smallest sum of risks on the grid; an upper bound on the market risk.
    pub estimate: f64,
    /// `estimate - omega`: a lower bound when the box contains an optimum.
    pub lower_bound: f64,
    /// Worst-case loss from the grid spacing, `(L_1 + L_2) h / 2`.
    pub omega: f64,
    pub lipschitz: [f64; 2],
    pub best: Option<Allocation>,
    pub points: u64,
}

/// Grid minimum of `rho_1(X_1) + rho_2(X - X_1)`.
pub fn brute_lambda(s: &AgentSystem, x: &[f64], g: &GridSpec) -> Result<BruteLambda> {
    let lay = layout(s, x)?;
    dim_check("grid bounds", g.lower.len(), x.len())?;
    let points = g.size(&lay.free)?;
    let lipschitz = [s.regimes()[0].lipschitz_bound()?, s.regimes()[1].lipschitz_bound()?];
    let omega = 0.5 * g.h * (lipschitz[0] + lipschitz[1]);
    let (estimate, arg) = (0..points)
        .into_par_iter()
        .map(|k| {
            let (a, b) = pair(s, x, &point(g, &lay, k));
            (a + b, k)
        })
        .reduce(|| (f64::INFINITY, u64::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let best = (estimate.is_finite()).then(|| {
        let x1 = point(g, &lay, arg);
        let x2 = x.iter().zip(&x1).map(|(a, b)| a - b).collect();
        Allocation::new(vec![x1, x2])
    });
    Ok(BruteLambda { estimate, lower_bound: estimate - omega, omega, lipschitz, best, points })
}

#[derive(Debug, Clone)]
pub struct ParetoVerdict {
    pub pareto: bool,
    pub omega: f64,
    /// A grid allocation no worse for either agent and better in total by more than `omega`.
    pub witness: Option<Allocation>,
}

/// Searches the grid for an allocation that lowers the total risk by more
/// than `omega` without raising either agent's risk.
pub fn verify_pareto(s: &AgentSystem, x: &[f64], alloc: &Allocation, g: &GridSpec) -> Result<ParetoVerdict> {
    let lay = layout(s, x)?;
    dim_check("allocation", alloc.parts.len(), 2)?;
    let points = g.size(&lay.free)?;
    let lipschitz = [s.regimes()[0].lipschitz_bound()?, s.regimes()[1].lipschitz_bound()?];
    let omega = 0.5 * g.h * (lipschitz[0] + lipschitz[1]);
    let r1 = risk(s, 0, &alloc.parts[0]);
    let r2 = risk(s, 1, &alloc.parts[1]);
    let found = (0..points).into_par_iter().find_first(|&k| {
        let (a, b) = pair(s, x, &point(g, &lay, k));
        a <= r1 + 1e-12 && b <= r2 + 1e-12 && (a + b) < r1 + r2 - omega
    });
    let witness = found.map(|k| {
        let x1 = point(g, &lay, k);
        let x2 = x.iter().zip(&x1).map(|(a, b)| a - b).collect();
        Allocation::new(vec![x1, x2])
    });
    Ok(ParetoVerdict { pareto: witness.is_none(), omega, witness })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdPath {
    /// Central differences compared with the gradient.
    Smooth,
    /// One-sided differences disagree; the subgradient inequality is probed instead.
    Kink,
}

#[derive(Debug, Clone)]
pub struct FdCheck {
    pub path: FdPath,
    /// Relative gradient error on the smooth path; largest inequality
    /// violation on the kink path.
    pub error: f64,
    pub passed: bool,
}

/// Compares `phi` (per-scenario weights) with finite differences of `f`
/// at `x`. `f` returns `None` outside its domain.
pub fn fd_subgradient_check(
    f: &(dyn Fn(&[f64]) -> Option<f64> + Sync),
    x: &[f64],
    phi: &[f64],
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<FdCheck> {
    dim_check("subgradient", phi.len(), x.len())?;
    let fx = f(x).ok_or_else(|| Error::Domain("function is not finite at the base point".into()))?;
    let eval = |w: usize, t: f64| -> Result<f64> {
        let mut y = x.to_vec();
        y[w] += t;
        f(&y).ok_or_else(|| Error::Domain("function is not finite near the base point".into()))
    };
    let scale = phi.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    let mut central = Vec::with_capacity(x.len());
    let mut kink = false;
    for w in 0..x.len() {
        let (up, dn) = (eval(w, FD_STEP)?, eval(w, -FD_STEP)?);
        let (fwd, bwd) = ((up - fx) / FD_STEP, (fx - dn) / FD_STEP);
        // a smooth function's one-sided slopes differ by O(step)
        if (fwd - bwd).abs() > 1e-3 * scale.max(1.0) {
            kink = true;
        }
        central.push((up - dn) / (2.0 * FD_STEP));
    }
    if !kink {
        let err = central.iter().zip(phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        return Ok(FdCheck { path: FdPath::Smooth, error: err, passed: err <= tol });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let y: Vec<f64> = x.iter().map(|v| v + radius * rng.gen_range(-1.0..1.0)).collect();
        let Some(fy) = f(&y) else { continue };
        let lin: f64 = fx + phi.iter().zip(y.iter().zip(x)).map(|(p, (a, b))| p * (a - b)).sum::<f64>();
        worst = worst.max(lin - fy);
    }
    Ok(FdCheck { path: FdPath::Kink, error: worst, passed: worst <= 1e-8 })
}
