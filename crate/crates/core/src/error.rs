use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} has length {actual}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("segment {segment} is folded past its plate (L0 + δL - (r/d)|Δ| = {margin:.6e} m)")]
    InvalidConfig { segment: usize, margin: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("mass matrix is not positive definite")]
    Factorization,

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("unsupported barrier relative degree {0} (supported: 1, 2)")]
    UnsupportedOrder(usize),

    #[error("initial state is not admissible: barrier row {row} has psi0 = {psi0:.6e}, psi1 = {psi1:.6e}")]
    Inadmissible { row: usize, psi0: f64, psi1: f64 },
}
