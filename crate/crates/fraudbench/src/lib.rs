//! Benchmark framework for adversarial attacks on composed fraud-detection
//! engines: synthetic transaction data, a rule+classifier engine, a
//! reinforcement-learning attacker with distribution-mimicking baselines, and
//! a harness that runs attack campaigns and reports cumulative success rates.

pub mod attackers;
pub mod core;
pub mod datagen;
pub mod detectors;
pub mod env;
pub mod harness;
pub mod numkit;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension or shape mismatch between inputs.
    #[error("shape error: {0}")]
    Shape(String),
    /// Numerical failure (not positive definite, divergence, non-finite).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An operation was called outside its contract (bad arguments, wrong
    /// protocol order, exhausted budget).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Malformed input data, with enough position detail to find it.
    #[error("data error: {0}")]
    Data(String),
    /// Bad or inconsistent run configuration.
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
