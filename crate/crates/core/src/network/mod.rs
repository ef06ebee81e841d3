//! The network, its data and loss, and the local expansion of the risk.

pub mod activation;
pub mod boundary;
pub mod data;
pub mod derivatives;
pub mod expansion;
pub mod loss;
pub mod params;
pub mod point;

pub use activation::Activation;
pub use boundary::{boundary_analysis, scan_boundary, BoundaryAnalysis, SignPattern, UnitBoundary};
pub use data::{augment, validate_general_position, Dataset, GeneralPositionMode, GeneralPositionReport};
pub use derivatives::{empirical_risk, forward, per_sample_derivatives, risk_and_gradient, Forward, SampleDerivatives};
pub use expansion::{expansion_terms, output_perturbations, ExpansionTerms};
pub use loss::{LogCoshLoss, LossModel, SquaredLoss};
pub use params::{Dims, NetworkParams, Perturbation};
pub use point::PointContext;
