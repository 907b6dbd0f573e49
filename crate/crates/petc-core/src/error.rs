use thiserror::Error;

/// Errors produced by design, simulation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("timing design failed: {0}")]
    Design(String),

    #[error("phi trajectory became non-finite at tau = {tau} (integration step too large?)")]
    PhiNonFinite { tau: f64 },

    #[error("phi table lookup out of range: tau = {tau}, valid up to {max}")]
    PhiOutOfRange { tau: f64, max: f64 },

    #[error("protocol violation at t = {t}: {msg}")]
    Protocol { t: f64, msg: String },

    #[error("state invariant violated at t = {t}: {msg}")]
    Invariant { t: f64, msg: String },

    #[error("non-finite state at t = {t}: {msg}")]
    NonFinite { t: f64, msg: String },

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
