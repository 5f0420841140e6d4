//! Numerical workbench for multi-terminal secret key generation with one
//! communicator.
//!
//! One terminal (the communicator) observes a source `Z` and sends a single
//! public message to each of `m` receivers observing correlated sources
//! `X_1, ..., X_m`; afterwards all terminals agree on a secret key. This
//! crate evaluates and optimizes the achievable (key rate, communication
//! rate) regions of that model, computes one-shot achievability bounds from
//! information densities, simulates the superposition / likelihood-encoder
//! coding scheme exactly and by Monte Carlo, and computes
//! hypercontractivity-based converse bounds.
//!
//! Everything operates on exact, dense probability mass functions over small
//! finite alphabets. All information quantities are in nats internally; the
//! CLI converts to bits for display.

pub mod cli;
pub mod hyperc;
pub mod oneshot;
pub mod probkit;
pub mod protosim;
pub mod regions;
pub mod search;

pub use probkit::{Channel, DensitySpectrum, JointPmf, ProbError};
pub use regions::{AuxScheme, RatePoint, SourceSpec};
pub use search::SearchConfig;

use thiserror::Error;

/// Crate-wide error type. Variants are grouped so the CLI can map them onto
/// distinct exit statuses (usage vs validation vs resource).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Prob(#[from] ProbError),

    /// Caller passed structurally incompatible arguments.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Input data failed validation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configured memory or enumeration budget would be exceeded.
    #[error("{what} requires {required} units but the budget is {budget}")]
    Resource {
        what: String,
        required: u128,
        budget: u128,
    },

    /// Integer quantity not representable (e.g. codebook sizes too large).
    #[error("overflow: {0}")]
    Overflow(String),
}

/// Coarse error class used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Validation,
    Resource,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Prob(_) | Error::ShapeMismatch(_) => ErrorClass::Usage,
            Error::InvalidInput(_) | Error::Overflow(_) => ErrorClass::Validation,
            Error::Resource { .. } => ErrorClass::Resource,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
