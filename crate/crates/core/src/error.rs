use thiserror::Error;

/// Errors raised by the simulation, protocol and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("integration step size underflow at t = {t} ns (h = {h:e} ns)")]
    StepUnderflow { t: f64, h: f64 },

    #[error("drive is not negligible at window start t = {t_start} ns (|Ω| = {magnitude:e} rad/ns); extend the window")]
    PulseNotNegligible { t_start: f64, magnitude: f64 },

    #[error("no photon emitted (emission probability {p_emit:e})")]
    NoPhoton { p_emit: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("underdetermined: {0}")]
    Underdetermined(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("evaluation budget of {0} exhausted before a feasible point was found")]
    BudgetExhausted(usize),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.into(), reason: reason.into() }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
