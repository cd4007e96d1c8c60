use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unstable configuration: {0}")]
    Unstable(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("degenerate control: {0}")]
    DegenerateControl(String),
    #[error("no root: {0}")]
    NoRoot(String),
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence(_) | Error::QuadratureFailure(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
