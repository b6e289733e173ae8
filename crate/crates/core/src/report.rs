use serde::Serialize;

/// A single named check with an optional measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    /// Threshold the value was judged against; `None` for structural checks.
    pub tolerance: Option<f64>,
    pub detail: String,
}

/// Ordered collection of checks. Passes when every check passes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, passed: bool, value: Option<f64>, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), passed, value, tolerance: None, detail: detail.into() });
    }

    pub fn push_tol(&mut self, name: &str, passed: bool, value: Option<f64>, tol: f64, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), passed, value, tolerance: Some(tol), detail: detail.into() });
    }

    pub fn extend(&mut self, prefix: &str, other: Report) {
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}
