use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("precondition violated: {0}")]
    Contract(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{what}: expected {want}, got {got}")));
    }
    Ok(())
}
