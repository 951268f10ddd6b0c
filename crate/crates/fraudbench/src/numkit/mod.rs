//! Self-contained numeric kit: matrices, seeded RNG, Cholesky, multivariate
//! normals, percentiles, sample moments, a small MLP with exact backprop, and
//! Adam. Everything is deterministic given a seed.

pub mod adam;
pub mod linalg;
pub mod matrix;
pub mod mlp;
pub mod mvn;
pub mod rng;
pub mod stats;

pub use adam::AdamState;
pub use linalg::{cholesky, solve_lower, solve_lower_transpose};
pub use matrix::Matrix;
pub use mlp::{Activation, Layer, LayerNorm, MlpCache, MlpGrads, MlpParams};
pub use mvn::{mvn_log_pdf, mvn_sample, LN_2PI};
pub use rng::{derive_seed, Rng, SplitMix64};
pub use stats::{mean_and_covariance, percentile};
