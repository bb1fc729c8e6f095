use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{AllocationDescriptor, EmpiricalMeasure, RiskMeasureSpec};
use crate::oracle::spectral_infconv_exact;
use crate::sampling::wasserstein_p;

use super::EnsembleAllocation;

pub const DEFAULT_TRUNCATION: usize = 12;
pub const DEFAULT_GRID_PER_UNIT: usize = 512;

/// Upper bound on the terms `h > H` dropped from the metric sums.
pub fn tail_bound(truncation: usize) -> f64 {
    0.5f64.powi(truncation as i32)
}

/// `Σ_h 2^{−h} min(1, m_h)` where `m_h` is the largest `|diff|` among points
/// with `|x| ≤ h`. Expects `xs` and `diffs` aligned.
fn weighted_sup_sum(xs: &[f64], diffs: &[f64], truncation: usize) -> f64 {
    let mut sup = vec![0.0f64; truncation + 1];
    for (x, d) in xs.iter().zip(diffs) {
        let h = x.abs().ceil().max(1.0);
        if h <= truncation as f64 {
            let h = h as usize;
            sup[h] = sup[h].max(d.abs());
        }
    }
    let mut running = 0.0f64;
    let mut total = 0.0;
    for (h, s) in sup.iter().enumerate().skip(1) {
        running = running.max(*s);
        total += 0.5f64.powi(h as i32) * running.min(1.0);
    }
    total
}

/// Metric of uniform convergence on compacts, with each sup taken over a
/// uniform grid of `grid_per_unit` points per unit length. `phi` and `psi`
/// map a batch of points to their values.
pub fn metric_d_batch(
    phi: impl Fn(&[f64]) -> Vec<f64>,
    psi: impl Fn(&[f64]) -> Vec<f64>,
    truncation: usize,
    grid_per_unit: usize,
) -> f64 {
    let g = grid_per_unit.max(1) as i64;
    let reach = truncation as i64 * g;
    let xs: Vec<f64> = (-reach..=reach).map(|k| k as f64 / g as f64).collect();
    let diffs: Vec<f64> = phi(&xs).iter().zip(psi(&xs)).map(|(a, b)| a - b).collect();
    weighted_sup_sum(&xs, &diffs, truncation)
}

pub fn metric_d(phi: impl Fn(f64) -> f64, psi: impl Fn(f64) -> f64, truncation: usize, grid_per_unit: usize) -> f64 {
    metric_d_batch(
        |xs| xs.iter().map(|&x| phi(x)).collect(),
        |xs| xs.iter().map(|&x| psi(x)).collect(),
        truncation,
        grid_per_unit,
    )
}

/// As [`metric_d`] with each sup replaced by the max over the sample points.
pub fn metric_d_mu_batch(
    phi: impl Fn(&[f64]) -> Vec<f64>,
    psi: impl Fn(&[f64]) -> Vec<f64>,
    m: &EmpiricalMeasure,
    truncation: usize,
) -> f64 {
    let xs = m.samples();
    let diffs: Vec<f64> = phi(xs).iter().zip(psi(xs)).map(|(a, b)| a - b).collect();
    weighted_sup_sum(xs, &diffs, truncation)
}

pub fn metric_d_mu(phi: impl Fn(f64) -> f64, psi: impl Fn(f64) -> f64, m: &EmpiricalMeasure, truncation: usize) -> f64 {
    metric_d_mu_batch(
        |xs| xs.iter().map(|&x| phi(x)).collect(),
        |xs| xs.iter().map(|&x| psi(x)).collect(),
        m,
        truncation,
    )
}

/// `x ↦ f(x) − f(0)`.
pub fn anchored(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> f64 {
    let f0 = f(0.0);
    move |x| f(x) - f0
}

/// Mean squared distance between `Φ̂₁` and the exact `Φ₁` over `eval_sample`.
pub fn l2_error(approx: &EnsembleAllocation, exact: &AllocationDescriptor, eval_sample: &[f64]) -> Result<f64> {
    if eval_sample.is_empty() {
        return Err(Error::input("empty evaluation sample"));
    }
    let approx = approx.phi1_batch(eval_sample)?;
    let mut acc = 0.0;
    for (x, a) in eval_sample.iter().zip(approx) {
        let e = exact
            .phi1(*x)
            .ok_or_else(|| Error::Unsupported("exact allocation is not fully determined".into()))?;
        acc += (a - e) * (a - e);
    }
    Ok(acc / eval_sample.len() as f64)
}

/// Least-squares fit of `x ↦ min(x − k, 0) + c` to the points `(xᵢ, fᵢ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedLossFit {
    pub k: f64,
    pub c: f64,
    pub mean_squared_residual: f64,
}

impl CappedLossFit {
    pub fn eval(&self, x: f64) -> f64 {
        (x - self.k).min(0.0) + self.c
    }
}

pub fn fit_capped_loss(xs: &[f64], f: &[f64]) -> Result<CappedLossFit> {
    if xs.is_empty() || xs.len() != f.len() {
        return Err(Error::input("fit needs equally long non-empty inputs"));
    }
    let n = xs.len() as f64;
    let fit_at = |k: f64| {
        let c = xs.iter().zip(f).map(|(x, f)| f - (x - k).min(0.0)).sum::<f64>() / n;
        let r = xs.iter().zip(f).map(|(x, f)| (f - (x - k).min(0.0) - c).powi(2)).sum::<f64>() / n;
        CappedLossFit { k, c, mean_squared_residual: r }
    };
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    const STEPS: usize = 400;
    let step = (hi - lo) / STEPS as f64;
    let mut best = fit_at(lo);
    for i in 1..=STEPS {
        let cand = fit_at(lo + i as f64 * step);
        if cand.mean_squared_residual < best.mean_squared_residual {
            best = cand;
        }
    }
    if step > 0.0 {
        // golden-section refinement around the best grid point
        let (mut a, mut b) = ((best.k - step).max(lo), (best.k + step).min(hi));
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let (c, d) = (b - r * (b - a), a + r * (b - a));
            if fit_at(c).mean_squared_residual <= fit_at(d).mean_squared_residual {
                b = d;
            } else {
                a = c;
            }
        }
        let cand = fit_at(0.5 * (a + b));
        if cand.mean_squared_residual < best.mean_squared_residual {
            best = cand;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compares the change of the empirical inf-convolution between two samples
/// with `(‖h₁‖_q + ‖h₂‖_q)·W_p`, `q = p/(p−1)`.
pub fn spectral_stability_check(
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
    ma: &EmpiricalMeasure,
    mb: &EmpiricalMeasure,
    p: f64,
) -> Result<StabilityCheck> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::input(format!("p must lie in (1, inf), got {p}")));
    }
    let q = p / (p - 1.0);
    let norm = |s: &RiskMeasureSpec| {
        s.spectral_norm(q)
            .ok_or_else(|| Error::Unsupported(format!("{s} has no bounded spectral density")))
    };
    let norms = norm(spec1)? + norm(spec2)?;
    let va = spectral_infconv_exact(ma, spec1, spec2)?.value;
    let vb = spectral_infconv_exact(mb, spec1, spec2)?.value;
    let lhs = (va - vb).abs();
    let rhs = norms * wasserstein_p(ma, mb, p)?;
    Ok(StabilityCheck { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}
