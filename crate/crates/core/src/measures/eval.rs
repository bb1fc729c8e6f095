use super::{EmpiricalMeasure, RiskMeasureSpec, SpectralDensity};
use crate::error::{Error, Result};

/// Rounds `x` to the nearest integer when it is within floating-point noise
/// of one, so that `N·u` with `u = k/N` lands on `k`.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

fn check_open_unit(u: f64, what: &str) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("{what} {u} must lie in (0,1)")))
    }
}

/// `β·log((1/N)·Σ exp(−xᵢ/β))` with a max shift.
pub fn eval_entropic(m: &EmpiricalMeasure, beta: f64) -> Result<f64> {
    Ok(entropic_parts(m, beta)?.0)
}

// value and the softmax weights over sorted positions
fn entropic_parts(m: &EmpiricalMeasure, beta: f64) -> Result<(f64, Vec<f64>)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::input(format!("entropic beta {beta} must be positive")));
    }
    let xs = m.samples();
    // the largest exponent comes from the smallest sample
    let shift = -xs[0] / beta;
    let mut weights: Vec<f64> = xs.iter().map(|x| (-x / beta - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    let value = beta * (total.ln() + shift - (xs.len() as f64).ln());
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((value, weights))
}

/// Empirical value at risk `−x₍⌈N·u⌉₎`.
pub fn eval_var(m: &EmpiricalMeasure, u: f64) -> Result<f64> {
    check_open_unit(u, "VaR level")?;
    let n = m.len();
    let k = (snap(n as f64 * u).ceil() as usize).clamp(1, n);
    Ok(-m.samples()[k - 1])
}

/// Exact integral of the empirical VaR over `(0, α]`, divided by `α`.
pub fn eval_es(m: &EmpiricalMeasure, alpha: f64) -> Result<f64> {
    check_open_unit(alpha, "ES level")?;
    let xs = m.samples();
    let an = snap(alpha * xs.len() as f64);
    let whole = an.floor() as usize;
    let frac = an - whole as f64;
    let mut acc: f64 = xs[..whole].iter().map(|x| -x).sum();
    if frac > 0.0 {
        acc += frac * -xs[whole];
    }
    Ok(acc / an)
}

pub fn eval_distortion(m: &EmpiricalMeasure, components: &[(f64, f64)]) -> Result<f64> {
    if components.is_empty() {
        return Err(Error::input("distortion needs at least one component"));
    }
    components
        .iter()
        .map(|&(w, a)| eval_es(m, a).map(|v| w * v))
        .sum()
}

/// `∫₀¹ VaR_u h(u) du`, integrating `h` exactly over each interval on which
/// the empirical VaR is constant.
pub fn eval_spectral(m: &EmpiricalMeasure, density: &SpectralDensity) -> Result<f64> {
    let w = spectral_weights(m.len(), |u| density.mass_below(u));
    Ok(m.samples().iter().zip(&w).map(|(x, w)| -x * w).sum())
}

// w_k = H(k/N) − H((k−1)/N) for the cumulative spectral mass H
fn spectral_weights(n: usize, mass_below: impl Fn(f64) -> f64) -> Vec<f64> {
    let nf = n as f64;
    let mut prev = 0.0;
    (1..=n)
        .map(|k| {
            let cur = mass_below(k as f64 / nf);
            let w = cur - prev;
            prev = cur;
            w
        })
        .collect()
}

fn es_weights(n: usize, alpha: f64) -> Vec<f64> {
    let an = snap(alpha * n as f64);
    let whole = an.floor() as usize;
    let frac = an - whole as f64;
    let mut w = vec![0.0; n];
    w[..whole].iter_mut().for_each(|v| *v = 1.0 / an);
    if frac > 0.0 {
        w[whole] = frac / an;
    }
    w
}

/// Value of `spec` on `m`.
pub fn eval(spec: &RiskMeasureSpec, m: &EmpiricalMeasure) -> Result<f64> {
    spec.validate()?;
    eval_unchecked(spec, m)
}

fn eval_unchecked(spec: &RiskMeasureSpec, m: &EmpiricalMeasure) -> Result<f64> {
    match spec {
        RiskMeasureSpec::Entropic { beta } => eval_entropic(m, *beta),
        RiskMeasureSpec::ExpectedShortfall { alpha } => eval_es(m, *alpha),
        RiskMeasureSpec::Distortion { components } => eval_distortion(m, components),
        RiskMeasureSpec::Spectral { density } => eval_spectral(m, density),
        RiskMeasureSpec::Combination { terms } => terms
            .iter()
            .map(|(w, s)| eval_unchecked(s, m).map(|v| w * v))
            .sum(),
    }
}

/// Value and gradient with respect to each sample, in input order.
///
/// For quantile-based measures the gradient is the subgradient selected by
/// the stable sort of `m`.
pub fn eval_with_grad(spec: &RiskMeasureSpec, m: &EmpiricalMeasure) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    let (value, sorted_grad) = sorted_value_grad(spec, m)?;
    Ok((value, m.to_input_order(&sorted_grad)))
}

/// Value and gradient indexed by sorted position.
pub(crate) fn sorted_value_grad(
    spec: &RiskMeasureSpec,
    m: &EmpiricalMeasure,
) -> Result<(f64, Vec<f64>)> {
    let xs = m.samples();
    let n = xs.len();
    let linear = |w: Vec<f64>| {
        let value = xs.iter().zip(&w).map(|(x, w)| -x * w).sum::<f64>();
        (value, w.into_iter().map(|w| -w).collect::<Vec<_>>())
    };
    match spec {
        RiskMeasureSpec::Entropic { beta } => {
            let (value, mut w) = entropic_parts(m, *beta)?;
            w.iter_mut().for_each(|v| *v = -*v);
            Ok((value, w))
        }
        RiskMeasureSpec::ExpectedShortfall { alpha } => {
            check_open_unit(*alpha, "ES level")?;
            Ok(linear(es_weights(n, *alpha)))
        }
        RiskMeasureSpec::Distortion { components } => {
            let mut w = vec![0.0; n];
            for &(c, a) in components {
                check_open_unit(a, "ES level")?;
                for (acc, v) in w.iter_mut().zip(es_weights(n, a)) {
                    *acc += c * v;
                }
            }
            Ok(linear(w))
        }
        RiskMeasureSpec::Spectral { density } => {
            Ok(linear(spectral_weights(n, |u| density.mass_below(u))))
        }
        RiskMeasureSpec::Combination { terms } => {
            let mut value = 0.0;
            let mut grad = vec![0.0; n];
            for (w, s) in terms {
                let (v, g) = sorted_value_grad(s, m)?;
                value += w * v;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += w * gi;
                }
            }
            Ok((value, grad))
        }
    }
}
