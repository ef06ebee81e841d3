//! Certification of local optimality for one-hidden-layer networks with
//! piecewise-linear activations, including points where the empirical risk
//! is not differentiable.
//!
//! [`sosp_check`] takes a parameter point and a dataset and returns one of
//! three verdicts: a strict local minimum, a second-order stationary point
//! with a flat direction, or a descent direction confirmed on the risk.

pub mod config;
pub mod error;
pub mod first_order;
pub mod network;
pub mod numerics;
pub mod orchestrator;
pub mod second_order;

pub use config::{PgdConfig, TesterConfig};
pub use error::{Error, Result};
pub use network::{Activation, Dataset, Dims, LogCoshLoss, LossModel, NetworkParams, Perturbation, SquaredLoss};
pub use orchestrator::{enumerate_sign_patterns, sosp_check, validate_descent, Stage, Verdict, VerdictKind};
