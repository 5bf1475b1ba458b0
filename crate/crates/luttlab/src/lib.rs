//! Numerical laboratory for one-dimensional interacting lattice fermions.
//!
//! The crate provides exact finite-volume diagnostics (exact diagonalization,
//! Matsubara response functions, lattice Ward identities) side by side with
//! the continuum effective theory they flow to at large distance: Luttinger
//! parameters, closed-form correlators, multiscale propagators, and the
//! renormalization-group flows that connect the two descriptions.

pub mod correlators;
pub mod effective;
pub mod fock_ed;
pub mod multiscale;
pub mod numerics;
pub mod response;
pub mod rg_flow;
pub mod verify;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("invalid sector: {0}")]
    InvalidSector(String),
    #[error("operator is not hermitian (max asymmetry {0:.3e})")]
    NonHermitian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cost guard exceeded: {0}")]
    CostGuard(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
