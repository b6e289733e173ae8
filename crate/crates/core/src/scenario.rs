//! Finite probability spaces and the vectors that live on them.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{dim_check, Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;

/// Scenario labels with strictly positive probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpace {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl ScenarioSpace {
    pub fn new(labels: Vec<String>, probs: Vec<f64>) -> Result<Arc<Self>> {
        if labels.is_empty() {
            return Err(Error::Invalid("scenario space needs at least one scenario".into()));
        }
        dim_check("probabilities", probs.len(), labels.len())?;
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Invalid(format!("duplicate scenario label {l:?}")));
            }
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Invalid(format!("scenario probability {p} is not strictly positive")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Arc::new(Self { labels, probs }))
    }

    /// Uniform space with labels `w0, w1, ...`.
    pub fn uniform(n: usize) -> Result<Arc<Self>> {
        Self::uniform_labeled((0..n).map(|i| format!("w{i}")).collect())
    }

    pub fn uniform_labeled(labels: Vec<String>) -> Result<Arc<Self>> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Invalid("scenario space needs at least one scenario".into()));
        }
        // spread the rounding error so the sum is exactly representable as close to 1 as possible
        let mut probs = vec![1.0 / n as f64; n];
        let drift = 1.0 - probs.iter().sum::<f64>();
        probs[0] += drift;
        Self::new(labels, probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Same labels and probabilities.
    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }

    pub fn rv(self: &Arc<Self>, values: Vec<f64>) -> Result<RandomVariable> {
        RandomVariable::new(self.clone(), values)
    }

    pub fn constant(self: &Arc<Self>, c: f64) -> RandomVariable {
        RandomVariable { space: self.clone(), values: vec![c; self.len()] }
    }

    pub fn indicator(self: &Arc<Self>, set: &[usize]) -> RandomVariable {
        let mut values = vec![0.0; self.len()];
        for &i in set {
            values[i] = 1.0;
        }
        RandomVariable { space: self.clone(), values }
    }

    /// Expectation of a raw value vector under the reference probability.
    pub fn mean(&self, values: &[f64]) -> f64 {
        self.probs.iter().zip(values).map(|(p, x)| p * x).sum()
    }
}

pub(crate) fn same_space(a: &Arc<ScenarioSpace>, b: &Arc<ScenarioSpace>) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::Dimension("objects live on different scenario spaces".into()))
    }
}

/// A loss vector indexed by scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable {
    space: Arc<ScenarioSpace>,
    values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(space: Arc<ScenarioSpace>, values: Vec<f64>) -> Result<Self> {
        dim_check("random variable", values.len(), space.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("random variable has a non-finite entry".into()));
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.space.mean(&self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { space: self.space.clone(), values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_space(&self.space, &other.space)?;
        Ok(Self {
            space: self.space.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        same_space(&self.space, &other.space)?;
        Ok(Self {
            space: self.space.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|x| k * x)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl fmt::Display for RandomVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (l, v)) in self.space.labels().iter().zip(&self.values).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}: {v}")?;
        }
        write!(f, ")")
    }
}

/// Linear functional `X -> E[d X]` given by a density `d` against the
/// reference probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    space: Arc<ScenarioSpace>,
    density: Vec<f64>,
}

impl Functional {
    pub fn new(space: Arc<ScenarioSpace>, density: Vec<f64>) -> Result<Self> {
        dim_check("functional density", density.len(), space.len())?;
        if density.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("functional density has a non-finite entry".into()));
        }
        Ok(Self { space, density })
    }

    /// Functional with the given per-scenario weights, i.e. `X -> sum w X`.
    pub fn from_weights(space: Arc<ScenarioSpace>, weights: &[f64]) -> Result<Self> {
        dim_check("functional weights", weights.len(), space.len())?;
        let density = weights.iter().zip(space.probs()).map(|(w, p)| w / p).collect();
        Self::new(space, density)
    }

    pub fn expectation(space: Arc<ScenarioSpace>) -> Self {
        let n = space.len();
        Self { space, density: vec![1.0; n] }
    }

    /// Point mass `X -> X(omega)`.
    pub fn point(space: Arc<ScenarioSpace>, omega: usize) -> Self {
        let mut density = vec![0.0; space.len()];
        density[omega] = 1.0 / space.probs()[omega];
        Self { space, density }
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        &self.space
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `p(omega) * d(omega)`, the coefficient of `X(omega)`.
    pub fn weights(&self) -> Vec<f64> {
        self.density.iter().zip(self.space.probs()).map(|(d, p)| d * p).collect()
    }

    pub fn apply(&self, x: &RandomVariable) -> Result<f64> {
        same_space(&self.space, x.space())?;
        Ok(self.apply_raw(x.values()))
    }

    pub fn apply_raw(&self, x: &[f64]) -> f64 {
        self.space.probs().iter().zip(&self.density).zip(x).map(|((p, d), v)| p * d * v).sum()
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.density.iter().all(|&d| d >= -tol)
    }
}

/// Coordinate mask describing a support ideal `{X : X = 0 outside the mask}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask {
    space: Arc<ScenarioSpace>,
    included: Vec<bool>,
}

impl SupportMask {
    pub fn new(space: Arc<ScenarioSpace>, included: Vec<bool>) -> Result<Self> {
        dim_check("support mask", included.len(), space.len())?;
        if !included.iter().any(|&b| b) {
            return Err(Error::Invalid("support mask selects no scenario".into()));
        }
        Ok(Self { space, included })
    }

    pub fn full(space: Arc<ScenarioSpace>) -> Self {
        let n = space.len();
        Self { space, included: vec![true; n] }
    }

    pub fn from_indices(space: Arc<ScenarioSpace>, idx: &[usize]) -> Result<Self> {
        let mut included = vec![false; space.len()];
        for &i in idx {
            if i >= space.len() {
                return Err(Error::Dimension(format!("scenario index {i} out of range")));
            }
            included[i] = true;
        }
        Self::new(space, included)
    }

    pub fn space(&self) -> &Arc<ScenarioSpace> {
        &self.space
    }

    pub fn contains(&self, omega: usize) -> bool {
        self.included[omega]
    }

    pub fn mask(&self) -> &[bool] {
        &self.included
    }

    pub fn is_full(&self) -> bool {
        self.included.iter().all(|&b| b)
    }

    /// Indices of the scenarios in the support, in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.included.len()).filter(|&i| self.included[i]).collect()
    }

    /// Whether `values` vanishes (up to `tol`) outside the support.
    pub fn admits(&self, values: &[f64], tol: f64) -> bool {
        values.iter().zip(&self.included).all(|(v, &inc)| inc || v.abs() <= tol)
    }
}

/// Value in `(-inf, +inf]`, used for risk measures and conjugates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    /// Finite value, or an error naming what was being evaluated.
    pub fn expect_finite(self, what: &str) -> Result<f64> {
        self.finite().ok_or_else(|| Error::Domain(format!("{what} is +infinity")))
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => write!(f, "+inf"),
        }
    }
}

/// `E[q X]` for a density `q`.
pub fn expectation(q: &Functional, x: &RandomVariable) -> Result<f64> {
    q.apply(x)
}

/// Values in non-increasing order together with the permutation that
/// produced them. Ties keep their original order.
pub fn sort_descending(x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..x.len()).collect();
    perm.sort_by(|&a, &b| x[b].total_cmp(&x[a]));
    (perm.iter().map(|&i| x[i]).collect(), perm)
}

/// Whether all pairs of variables move in the same direction across
/// every pair of scenarios.
pub fn is_comonotone(vars: &[&[f64]]) -> bool {
    let Some(first) = vars.first() else { return true };
    let n = first.len();
    for (a, x) in vars.iter().enumerate() {
        for y in &vars[a + 1..] {
            for i in 0..n {
                for j in i + 1..n {
                    if (x[i] - x[j]) * (y[i] - y[j]) < 0.0 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(ScenarioSpace::new(vec![], vec![]).is_err());
        assert!(ScenarioSpace::new(labels(2), vec![0.5, 0.6]).is_err());
        assert!(ScenarioSpace::new(labels(2), vec![1.0, 0.0]).is_err());
        assert!(ScenarioSpace::new(vec!["a".into(), "a".into()], vec![0.5, 0.5]).is_err());
        assert!(ScenarioSpace::new(labels(3), vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn uniform_sums_to_one() {
        for n in 1..40 {
            let s = ScenarioSpace::uniform(n).unwrap();
            assert!((s.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn expectation_examples() {
        let s = ScenarioSpace::uniform(3).unwrap();
        let one = Functional::expectation(s.clone());
        assert!((expectation(&one, &s.constant(2.5)).unwrap() - 2.5).abs() < 1e-15);

        let s2 = ScenarioSpace::uniform(2).unwrap();
        let q = Functional::new(s2.clone(), vec![1.0, 1.0]).unwrap();
        let x = s2.rv(vec![0.0, 4.0]).unwrap();
        assert_eq!(expectation(&q, &x).unwrap(), 2.0);

        let s4 = ScenarioSpace::uniform(4).unwrap();
        let q = Functional::new(s4.clone(), vec![2.0, 2.0, 0.0, 0.0]).unwrap();
        let x = s4.rv(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(expectation(&q, &x).unwrap(), 1.5);
    }

    #[test]
    fn expectation_rejects_foreign_space() {
        let a = ScenarioSpace::uniform(2).unwrap();
        let b = ScenarioSpace::new(labels(2), vec![0.3, 0.7]).unwrap();
        let q = Functional::expectation(a);
        assert!(expectation(&q, &b.constant(1.0)).is_err());
    }

    #[test]
    fn sort_descending_examples() {
        assert_eq!(sort_descending(&[1.0, 2.0, 3.0]), (vec![3.0, 2.0, 1.0], vec![2, 1, 0]));
        assert_eq!(sort_descending(&[5.0, 5.0, 1.0]), (vec![5.0, 5.0, 1.0], vec![0, 1, 2]));
    }

    #[test]
    fn comonotone_examples() {
        assert!(!is_comonotone(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert!(is_comonotone(&[&[1.0, 2.0, 3.0], &[0.0, 0.0, 5.0]]));
        assert!(is_comonotone(&[&[1.0, 2.0]]));
    }

    #[test]
    fn support_mask_admits() {
        let s = ScenarioSpace::uniform(3).unwrap();
        let m = SupportMask::from_indices(s, &[0, 1]).unwrap();
        assert!(m.admits(&[1.0, 2.0, 0.0], 0.0));
        assert!(!m.admits(&[1.0, 2.0, 1e-3], 1e-6));
        assert_eq!(m.indices(), vec![0, 1]);
    }
}
