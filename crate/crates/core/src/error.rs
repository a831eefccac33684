use alloc::string::String;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("eigensolver did not converge (worst relative residual {worst_residual:e})")]
    SolverFailure { worst_residual: f64 },

    #[error("levels {i} and {j} are degenerate (|E_i - E_j| = {gap:e})")]
    Degeneracy { i: usize, j: usize, gap: f64 },

    #[error("measurement at a = {result} annihilated the state")]
    AnnihilatedState { result: f64 },

    #[error("outcome density vanishes on the whole result grid")]
    DegenerateDensity,
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
