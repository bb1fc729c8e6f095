//! Empirical law-invariant risk measures.
//!
//! Every measure is evaluated on an [`EmpiricalMeasure`] and follows the loss
//! sign convention of monetary risk measures: `ρ(X + c) = ρ(X) − c`.

pub mod analytic;
mod empirical;
mod eval;
pub(crate) mod spec;

pub use analytic::{analytic_allocation, analytic_infconv, AllocationDescriptor};
pub use empirical::EmpiricalMeasure;
pub use eval::{
    eval, eval_distortion, eval_entropic, eval_es, eval_spectral, eval_var, eval_with_grad,
};
pub use spec::{RiskMeasureSpec, SpectralDensity};
