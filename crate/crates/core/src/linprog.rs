//! Dense two-phase simplex with dual multipliers and unbounded rays, plus
//! the small amount of linear algebra the rest of the crate needs.
//!
//! Sign convention for duals: `duals[i]` is the derivative of the optimal
//! objective with respect to the right-hand side of row `i`, for either
//! optimisation sense.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_check, Error, Result};

pub const FEAS_TOL: f64 = 1e-9;
pub const OPT_TOL: f64 = 1e-9;
pub const RANK_TOL: f64 = 1e-10;

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point (optimal vertex, or the last feasible vertex when unbounded).
    pub x: Vec<f64>,
    /// One multiplier per user row, see the module docs for the sign.
    pub duals: Vec<f64>,
    pub objective: f64,
    /// Objective of the dual program evaluated at `duals`.
    pub dual_objective: f64,
    /// Improving direction when the problem is unbounded.
    pub ray: Option<Vec<f64>>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LpProblem {
    /// Variables default to `[0, +inf)`.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { sense, objective, lower: vec![0.0; n], upper: vec![f64::INFINITY; n], rows: Vec::new() }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) -> &mut Self {
        self.lower[j] = lo;
        self.upper[j] = hi;
        self
    }

    pub fn set_free(&mut self, j: usize) -> &mut Self {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    /// Adds a dense row and returns its index.
    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, rel, rhs });
        self.rows.len() - 1
    }

    /// Adds a row given as `(variable, coefficient)` pairs. Repeated
    /// variables accumulate.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add_row(coeffs, rel, rhs)
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        dim_check("lower bounds", self.lower.len(), n)?;
        dim_check("upper bounds", self.upper.len(), n)?;
        for (i, r) in self.rows.iter().enumerate() {
            dim_check(&format!("row {i}"), r.coeffs.len(), n)?;
            if !r.rhs.is_finite() || r.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::Invalid(format!("row {i} has a non-finite entry")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("objective has a non-finite entry".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] == f64::INFINITY {
                return Err(Error::Invalid(format!("variable {j} has invalid bounds")));
            }
            if self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::Invalid(format!("variable {j} has invalid bounds")));
            }
        }
        Ok(())
    }

    /// Maximum violation of rows and bounds at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            let ax: f64 = r.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match r.rel {
                Relation::Le => ax - r.rhs,
                Relation::Ge => r.rhs - ax,
                Relation::Eq => (ax - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        self.validate()?;
        let flip = if self.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let cost: Vec<f64> = self.objective.iter().map(|c| flip * c).collect();
        let std = StandardForm::build(self, &cost);
        let out = std.solve()?;
        let sol = match out {
            StdOutcome::Infeasible => LpSolution {
                status: LpStatus::Infeasible,
                x: vec![],
                duals: vec![],
                objective: f64::NAN,
                dual_objective: f64::NAN,
                ray: None,
            },
            StdOutcome::Unbounded { z, dir } => {
                let x = std.recover(&z);
                let ray = std.recover_direction(&dir);
                LpSolution {
                    status: LpStatus::Unbounded,
                    objective: if self.sense == Sense::Minimize { f64::NEG_INFINITY } else { f64::INFINITY },
                    x,
                    duals: vec![],
                    dual_objective: f64::NAN,
                    ray: Some(ray),
                }
            }
            StdOutcome::Optimal { z, y } => {
                let x = std.recover(&z);
                let duals: Vec<f64> = (0..self.rows.len()).map(|i| std.row_sign[i] * y[i]).collect();
                let objective = self.objective_at(&x);
                let dual_objective = flip * dual_value(self, &cost, &duals);
                LpSolution {
                    status: LpStatus::Optimal,
                    x,
                    duals: duals.iter().map(|d| flip * d).collect(),
                    objective,
                    dual_objective,
                    ray: None,
                }
            }
        };
        Ok(sol)
    }
}

/// Dual objective of `min cost.x` at multipliers `y`. Bound multipliers are
/// the reduced costs, attached to whichever bound they price.
fn dual_value(p: &LpProblem, cost: &[f64], y: &[f64]) -> f64 {
    let mut val: f64 = p.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum();
    for j in 0..p.num_vars() {
        let d = cost[j] - p.rows.iter().zip(y).map(|(r, yi)| r.coeffs[j] * yi).sum::<f64>();
        if d > OPT_TOL {
            val += if p.lower[j].is_finite() { d * p.lower[j] } else { f64::NEG_INFINITY };
        } else if d < -OPT_TOL {
            val += if p.upper[j].is_finite() { d * p.upper[j] } else { f64::NEG_INFINITY };
        } else if p.lower[j].is_finite() && d > 0.0 {
            val += d * p.lower[j];
        } else if p.upper[j].is_finite() && d < 0.0 {
            val += d * p.upper[j];
        }
    }
    val
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = shift + z[col]`
    Shift { col: usize, shift: f64 },
    /// `x = top - z[col]`
    Mirror { col: usize, top: f64 },
    /// `x = z[pos] - z[neg]`
    Split { pos: usize, neg: usize },
}

enum StdOutcome {
    Optimal { z: Vec<f64>, y: Vec<f64> },
    Unbounded { z: Vec<f64>, dir: Vec<f64> },
    Infeasible,
}

/// `min c.z  s.t.  A z = b, z >= 0` with `b >= 0`.
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    maps: Vec<VarMap>,
    /// +1 or -1 per user row (rows negated to make `b >= 0`).
    row_sign: Vec<f64>,
}

impl StandardForm {
    fn build(p: &LpProblem, cost: &[f64]) -> Self {
        let n = p.num_vars();
        let mut maps = Vec::with_capacity(n);
        let mut ncols = 0;
        let mut upper_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let (lo, hi) = (p.lower[j], p.upper[j]);
            if lo.is_finite() {
                maps.push(VarMap::Shift { col: ncols, shift: lo });
                if hi.is_finite() {
                    upper_rows.push((ncols, hi - lo));
                }
                ncols += 1;
            } else if hi.is_finite() {
                maps.push(VarMap::Mirror { col: ncols, top: hi });
                ncols += 1;
            } else {
                maps.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
                ncols += 2;
            }
        }
        let structural = ncols;
        let slack_rows = p.rows.iter().filter(|r| r.rel != Relation::Eq).count() + upper_rows.len();
        let total = structural + slack_rows;
        let m = p.rows.len() + upper_rows.len();
        let mut a = vec![vec![0.0; total]; m];
        let mut b = vec![0.0; m];
        let mut c = vec![0.0; total];
        for j in 0..n {
            match maps[j] {
                VarMap::Shift { col, .. } => c[col] = cost[j],
                VarMap::Mirror { col, .. } => c[col] = -cost[j],
                VarMap::Split { pos, neg } => {
                    c[pos] = cost[j];
                    c[neg] = -cost[j];
                }
            }
        }
        let mut slack = structural;
        let mut row_sign = Vec::with_capacity(p.rows.len());
        for (i, r) in p.rows.iter().enumerate() {
            let mut rhs = r.rhs;
            for j in 0..n {
                let aij = r.coeffs[j];
                if aij == 0.0 {
                    continue;
                }
                match maps[j] {
                    VarMap::Shift { col, shift } => {
                        a[i][col] += aij;
                        rhs -= aij * shift;
                    }
                    VarMap::Mirror { col, top } => {
                        a[i][col] -= aij;
                        rhs -= aij * top;
                    }
                    VarMap::Split { pos, neg } => {
                        a[i][pos] += aij;
                        a[i][neg] -= aij;
                    }
                }
            }
            match r.rel {
                Relation::Le => {
                    a[i][slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    a[i][slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            if sign < 0.0 {
                a[i].iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            b[i] = rhs;
            row_sign.push(sign);
        }
        for (k, &(col, width)) in upper_rows.iter().enumerate() {
            let i = p.rows.len() + k;
            a[i][col] = 1.0;
            a[i][slack] = 1.0;
            slack += 1;
            b[i] = width.max(0.0);
        }
        Self { a, b, c, maps, row_sign }
    }

    fn recover(&self, z: &[f64]) -> Vec<f64> {
        self.maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift { col, shift } => shift + z[col],
                VarMap::Mirror { col, top } => top - z[col],
                VarMap::Split { pos, neg } => z[pos] - z[neg],
            })
            .collect()
    }

    fn recover_direction(&self, d: &[f64]) -> Vec<f64> {
        self.maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift { col, .. } => d[col],
                VarMap::Mirror { col, .. } => -d[col],
                VarMap::Split { pos, neg } => d[pos] - d[neg],
            })
            .collect()
    }

    fn solve(&self) -> Result<StdOutcome> {
        let m = self.b.len();
        let nreal = self.c.len();
        let width = nreal + m;
        if m == 0 {
            // no rows: optimal at zero unless some cost is negative
            if let Some(j) = (0..nreal).find(|&j| self.c[j] < -OPT_TOL) {
                let mut dir = vec![0.0; nreal];
                dir[j] = 1.0;
                return Ok(StdOutcome::Unbounded { z: vec![0.0; nreal], dir });
            }
            return Ok(StdOutcome::Optimal { z: vec![0.0; nreal], y: vec![] });
        }
        let mut t = Tableau::new(&self.a, &self.b, nreal);
        let scale = 1.0f64.max(self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));

        // phase one
        let mut phase1 = vec![0.0; width];
        phase1[nreal..].iter_mut().for_each(|v| *v = 1.0);
        let allow_all = vec![true; width];
        match t.run(&phase1, &allow_all)? {
            Pivoting::Optimal => {}
            Pivoting::Unbounded(_) => {
                return Err(Error::Inconsistent("phase one of the simplex cannot be unbounded".into()))
            }
        }
        let infeas: f64 = (0..m).filter(|&i| t.basis[i] >= nreal).map(|i| t.rhs(i)).sum();
        if infeas > FEAS_TOL * scale {
            return Ok(StdOutcome::Infeasible);
        }
        // drive artificials out of the basis where possible
        for i in 0..m {
            if t.basis[i] >= nreal {
                let col = (0..nreal)
                    .filter(|&j| t.at(i, j).abs() > 1e-9)
                    .max_by(|&a, &b| t.at(i, a).abs().total_cmp(&t.at(i, b).abs()));
                if let Some(j) = col {
                    t.pivot(i, j);
                }
            }
        }

        // phase two
        let mut cost = self.c.clone();
        cost.resize(width, 0.0);
        let mut allowed = vec![true; width];
        allowed[nreal..].iter_mut().for_each(|v| *v = false);
        match t.run(&cost, &allowed)? {
            Pivoting::Unbounded(e) => {
                let mut dir = vec![0.0; nreal];
                dir[e] = 1.0;
                for i in 0..m {
                    let bi = t.basis[i];
                    if bi < nreal {
                        dir[bi] -= t.at(i, e);
                    }
                }
                let z = t.solution(nreal);
                Ok(StdOutcome::Unbounded { z, dir })
            }
            Pivoting::Optimal => {
                let (z, y) = self.refine(&t, &cost).unwrap_or_else(|| {
                    let z = t.solution(nreal);
                    // y_i = -(reduced cost of artificial i)
                    let r = t.reduced_costs(&cost);
                    let y = (0..m).map(|i| -r[nreal + i]).collect();
                    (z, y)
                });
                Ok(StdOutcome::Optimal { z, y })
            }
        }
    }

    /// Recomputes the basic solution and multipliers from the final basis
    /// with an LU factorisation, which is more accurate than the tableau.
    fn refine(&self, t: &Tableau, cost: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = self.b.len();
        let nreal = self.c.len();
        let column = |j: usize, i: usize| if j < nreal { self.a[i][j] } else if j - nreal == i { 1.0 } else { 0.0 };
        let bmat = DMatrix::from_fn(m, m, |i, k| column(t.basis[k], i));
        let lu = bmat.clone().lu();
        let xb = lu.solve(&DVector::from_column_slice(&self.b))?;
        let cb = DVector::from_fn(m, |k, _| cost[t.basis[k]]);
        let y = bmat.transpose().lu().solve(&cb)?;
        let mut z = vec![0.0; nreal];
        for k in 0..m {
            let v = xb[k];
            if !v.is_finite() || v < -1e-7 {
                return None;
            }
            if t.basis[k] < nreal {
                z[t.basis[k]] = v.max(0.0);
            } else if v > 1e-7 {
                return None;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((z, y.iter().copied().collect()))
    }
}

enum Pivoting {
    Optimal,
    Unbounded(usize),
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; the last entry of each row is the rhs.
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(a: &[Vec<f64>], b: &[f64], nreal: usize) -> Self {
        let rows = a.len();
        let cols = nreal + rows;
        let mut data = vec![0.0; rows * (cols + 1)];
        for i in 0..rows {
            let r = &mut data[i * (cols + 1)..(i + 1) * (cols + 1)];
            r[..nreal].copy_from_slice(&a[i]);
            r[nreal + i] = 1.0;
            r[cols] = b[i];
        }
        Self { rows, cols, data, basis: (nreal..nreal + rows).collect() }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn solution(&self, nreal: usize) -> Vec<f64> {
        let mut z = vec![0.0; nreal];
        for i in 0..self.rows {
            if self.basis[i] < nreal {
                z[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        z
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut r = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (j, rj) in r.iter_mut().enumerate() {
                    *rj -= cb * self.at(i, j);
                }
            }
        }
        r
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let piv = self.data[pr * w + pc];
        for j in 0..w {
            self.data[pr * w + j] /= piv;
        }
        let prow: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == pr {
                continue;
            }
            let f = self.data[i * w + pc];
            if f != 0.0 {
                let row = &mut self.data[i * w..(i + 1) * w];
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Largest-coefficient pricing, falling back to Bland's rule after a run
    /// of degenerate pivots.
    fn run(&mut self, cost: &[f64], allowed: &[bool]) -> Result<Pivoting> {
        let cap = 50 * (self.rows + self.cols) + 1000;
        let mut degenerate_run = 0usize;
        let mut r = self.reduced_costs(cost);
        for _ in 0..cap {
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = -OPT_TOL;
            for j in 0..self.cols {
                if !allowed[j] || r[j] >= -OPT_TOL {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if r[j] < best {
                    best = r[j];
                    enter = Some(j);
                }
            }
            let Some(e) = enter else { return Ok(Pivoting::Optimal) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, e);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((l, ratio)) = leave else { return Ok(Pivoting::Unbounded(e)) };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(l, e);
            let f = r[e];
            for (j, rj) in r.iter_mut().enumerate() {
                *rj -= f * self.at(l, j);
            }
            r[e] = 0.0;
        }
        Err(Error::Numerical(format!("simplex hit the iteration cap of {cap}")))
    }
}

/// Incremental builder for problems whose variables are created on the fly.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, Relation, f64)>,
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.len() - 1
    }

    pub fn free_var(&mut self, cost: f64) -> usize {
        self.var(cost, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn row(&mut self, terms: Vec<(usize, f64)>, rel: Relation, rhs: f64) -> usize {
        self.rows.push((terms, rel, rhs));
        self.rows.len() - 1
    }

    pub fn build(&self, sense: Sense) -> LpProblem {
        let mut lp = LpProblem::new(sense, self.cost.clone());
        for j in 0..self.cost.len() {
            lp.set_bounds(j, self.lower[j], self.upper[j]);
        }
        for (terms, rel, rhs) in &self.rows {
            lp.add_sparse(terms, *rel, *rhs);
        }
        lp
    }
}

/// Affine expression `constant + sum coef * var` over model variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn plus(mut self, var: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

/// Adds `sum_k w_k expr_k (rel) rhs` to the model.
pub fn add_combination(model: &mut LpModel, weights: &[f64], exprs: &[Affine], rel: Relation, rhs: f64) -> usize {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    for (w, e) in weights.iter().zip(exprs) {
        if *w == 0.0 {
            continue;
        }
        constant += w * e.constant;
        terms.extend(e.terms.iter().map(|&(j, a)| (j, w * a)));
    }
    model.row(terms, rel, rhs - constant)
}

/// Orthonormal basis of `{v : A v = 0}` where `A` is given by its rows and
/// has `ncols` columns.
pub fn null_space(rows: &[Vec<f64>], ncols: usize) -> Vec<Vec<f64>> {
    let (r, pivots) = rref(rows, ncols);
    let free: Vec<usize> = (0..ncols).filter(|j| !pivots.contains(j)).collect();
    let raw: Vec<Vec<f64>> = free
        .iter()
        .map(|&f| {
            let mut v = vec![0.0; ncols];
            v[f] = 1.0;
            for (k, &pc) in pivots.iter().enumerate() {
                v[pc] = -r[k][f];
            }
            v
        })
        .collect();
    orthonormalize(&raw)
}

/// Reduced row echelon form with partial pivoting. Returns the non-zero rows
/// and their pivot columns.
pub fn rref(rows: &[Vec<f64>], ncols: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let scale = m.iter().flatten().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = RANK_TOL * scale;
    let mut pivots = Vec::new();
    let mut top = 0;
    for c in 0..ncols {
        if top == m.len() {
            break;
        }
        let (best, val) = (top..m.len())
            .map(|i| (i, m[i][c].abs()))
            .fold((top, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            for row in m.iter_mut().skip(top) {
                row[c] = 0.0;
            }
            continue;
        }
        m.swap(top, best);
        let p = m[top][c];
        m[top].iter_mut().for_each(|v| *v /= p);
        let prow = m[top].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != top && row[c] != 0.0 {
                let f = row[c];
                row.iter_mut().zip(&prow).for_each(|(v, q)| *v -= f * q);
                row[c] = 0.0;
            }
        }
        pivots.push(c);
        top += 1;
    }
    m.truncate(top);
    (m, pivots)
}

/// Rank of the matrix with the given rows.
pub fn rank(rows: &[Vec<f64>], ncols: usize) -> usize {
    rref(rows, ncols).1.len()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt with reorthogonalisation. Vectors that are
/// dependent on earlier ones (relative to their own length) are dropped.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let n0 = norm(v);
        if n0 == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm(&w);
        if n > 1e-9 * n0.max(1e-300) && n > 1e-14 {
            w.iter_mut().for_each(|a| *a /= n);
            out.push(w);
        }
    }
    out
}

/// Coefficients `c` with `sum_k c_k basis[k] = target`, or `None` when the
/// target is not in the span (residual above `tol`).
pub fn coefficients_in_span(basis: &[Vec<f64>], target: &[f64], tol: f64) -> Option<Vec<f64>> {
    let k = basis.len();
    let n = target.len();
    if k == 0 {
        return if target.iter().all(|v| v.abs() <= tol) { Some(vec![]) } else { None };
    }
    let a = DMatrix::from_fn(n, k, |i, j| basis[j][i]);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&DVector::from_column_slice(target), RANK_TOL).ok()?;
    let resid = &a * &c - DVector::from_column_slice(target);
    if resid.amax() > tol {
        return None;
    }
    Some(c.iter().copied().collect())
}
