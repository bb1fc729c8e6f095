//! Closed-form inf-convolutions and optimal allocations.
//!
//! `Entr_a □ Entr_b = Entr_{a+b}` with the proportional split, and
//! `ES_a □ ES_b = ES_{max(a,b)}` with the whole position on the agent with the
//! larger level. Values under the population law are obtained by adaptive
//! Simpson quadrature against the distribution's density.

use serde::{Deserialize, Serialize};

use super::RiskMeasureSpec;
use crate::quad::{adaptive_simpson, bisect};
use crate::sampling::DistributionSpec;

const QUAD_TOL: f64 = 1e-8;

/// `Entr_β(X)` under the population law.
pub fn entropic_value(beta: f64, dist: &DistributionSpec) -> f64 {
    let (lo, hi) = dist.support();
    let p = dist.pdf();
    // shift by the worst case to keep the exponent bounded
    let shift = -lo / beta;
    // the integrand is at most max p, so a tight absolute tolerance is also tight relatively
    let integral = adaptive_simpson(&|x| (-x / beta - shift).exp() * p(x), lo, hi, QUAD_TOL * 1e-4);
    beta * (integral.ln() + shift)
}

/// Population quantile `F⁻¹(u)`.
pub fn quantile(u: f64, dist: &DistributionSpec) -> f64 {
    let (lo, hi) = dist.support();
    if let DistributionSpec::Uniform { .. } = dist {
        return lo + (hi - lo) * u;
    }
    let p = dist.pdf();
    bisect(|x| adaptive_simpson(&p, lo, x, 1e-12), u, lo, hi)
}

/// `ES_α(X) = (1/α)∫₀^α VaR_u du = −(1/α)·E[X; X ≤ F⁻¹(α)]`.
pub fn es_value(alpha: f64, dist: &DistributionSpec) -> f64 {
    let (lo, _) = dist.support();
    let q = quantile(alpha, dist);
    let p = dist.pdf();
    -adaptive_simpson(&|x| x * p(x), lo, q, QUAD_TOL) / alpha
}

/// Population value of `ρ₁□ρ₂(X)` when a closed form is known.
pub fn analytic_infconv(
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
    dist: &DistributionSpec,
) -> Option<f64> {
    dist.validate().ok()?;
    match (spec1, spec2) {
        (RiskMeasureSpec::Entropic { beta: a }, RiskMeasureSpec::Entropic { beta: b }) => {
            Some(entropic_value(a + b, dist))
        }
        (
            RiskMeasureSpec::ExpectedShortfall { alpha: a },
            RiskMeasureSpec::ExpectedShortfall { alpha: b },
        ) => Some(es_value(a.max(*b), dist)),
        _ => None,
    }
}

/// Known optimal allocation `(Φ₁, Φ₂ = Id − Φ₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AllocationDescriptor {
    /// `Φ₁(x) = slope·x`.
    Proportional { slope: f64 },
    /// The ES agent (1 or 2) bears `−(x−k)⁻ = min(x−k, 0)` and the entropic
    /// agent `max(x, k)`, for some constant `k` with no closed form.
    CappedLoss { es_agent: u8 },
}

impl AllocationDescriptor {
    /// `Φ₁(x)`, when fully determined.
    pub fn phi1(&self, x: f64) -> Option<f64> {
        match self {
            AllocationDescriptor::Proportional { slope } => Some(slope * x),
            AllocationDescriptor::CappedLoss { .. } => None,
        }
    }

    /// `Φ₁(x)` for a given threshold `k`.
    pub fn phi1_with_threshold(&self, k: f64, x: f64) -> f64 {
        match self {
            AllocationDescriptor::Proportional { slope } => slope * x,
            AllocationDescriptor::CappedLoss { es_agent: 1 } => (x - k).min(0.0),
            AllocationDescriptor::CappedLoss { .. } => x.max(k),
        }
    }
}

pub fn analytic_allocation(
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
) -> Option<AllocationDescriptor> {
    use RiskMeasureSpec::*;
    match (spec1, spec2) {
        (Entropic { beta: a }, Entropic { beta: b }) => {
            Some(AllocationDescriptor::Proportional { slope: a / (a + b) })
        }
        (ExpectedShortfall { alpha: a }, ExpectedShortfall { alpha: b }) => {
            Some(AllocationDescriptor::Proportional { slope: if a >= b { 1.0 } else { 0.0 } })
        }
        (ExpectedShortfall { .. }, Entropic { .. }) => Some(AllocationDescriptor::CappedLoss { es_agent: 1 }),
        (Entropic { .. }, ExpectedShortfall { .. }) => Some(AllocationDescriptor::CappedLoss { es_agent: 2 }),
        _ => None,
    }
}
