//! Error taxonomy shared by all modules.

use thiserror::Error;

/// Errors produced by network construction, solvers, and simulations.
#[derive(Debug, Error)]
pub enum Error {
    /// Structurally malformed input: the message names the offending entry.
    #[error("malformed network: {0}")]
    Malformed(String),

    /// Invalid generator or operation parameter.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A generator spec that would produce a degenerate network.
    #[error("degenerate construction: {0}")]
    Generation(String),

    /// `(I - K)` was numerically singular. Impossible on a validated
    /// network, so this signals a validation bug upstream.
    #[error("degenerate kernel: {0}")]
    Degenerate(String),

    /// Problem size exceeds a documented cap.
    #[error("capacity exceeded: {what} supports at most {limit}, got {got}")]
    Capacity {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    /// Domain violation (empty target set, negative horizon, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A walk or stabilization exceeded the hard step cap.
    #[error("runaway simulation: exceeded {cap} steps (validation bug?)")]
    Runaway { cap: u64 },

    /// Iterative solver failed to reach the requested tolerance.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
