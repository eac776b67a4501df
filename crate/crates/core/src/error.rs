use thiserror::Error;

/// Errors produced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} did not converge: {detail}")]
    NoConvergence { what: &'static str, detail: String },

    #[error("point {x} lies on the support; a principal value is required (use hilbert_transform)")]
    PrincipalValueRequired { x: f64 },

    #[error("non-integrable singularity at x = {x}")]
    Singular { x: f64 },

    #[error("z = {re} + {im}i lies below the subordination graph (height {height})")]
    OutsideDomain { re: f64, im: f64, height: f64 },

    #[error("duplicate initial points near {at}; split them with an explicit epsilon first")]
    DuplicatePoints { at: f64 },

    #[error("no bracket for the root in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn no_convergence(what: &'static str, detail: impl Into<String>) -> Self {
        Error::NoConvergence {
            what,
            detail: detail.into(),
        }
    }

    /// True for failures of an iterative method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NoConvergence { .. } | Error::NoBracket { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
