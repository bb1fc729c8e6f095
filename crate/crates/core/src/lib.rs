//! Optimal risk sharing between two agents.
//!
//! The crate computes the inf-convolution `ρ₁□ρ₂(X)` of two law-invariant
//! convex risk measures on an empirical sample, either by training a pair of
//! small feed-forward networks (the [`sharing`] module) or by exhaustive
//! search over piecewise-linear comonotone allocations (the [`oracle`]
//! module). Closed-form values for the entropic and expected-shortfall pairs
//! live in [`measures::analytic`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod measures;
pub mod net;
pub mod optim;
pub mod oracle;
pub mod quad;
pub mod sampling;
pub mod sharing;

pub use error::{Error, Result};
pub use measures::{EmpiricalMeasure, RiskMeasureSpec, SpectralDensity};
pub use net::{ActivationKind, GradientBuffer, Mlp};
pub use optim::{AdamState, PlateauState};
pub use oracle::{GridAllocation, OracleResult};
pub use sampling::{DistributionSpec, RngSeed};
pub use sharing::{AllocationPair, EnsembleAllocation, LossHistory, TrainConfig};
