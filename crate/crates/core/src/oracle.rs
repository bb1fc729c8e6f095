//! Brute-force minimization of `ρ₁(f(X)) + ρ₂(X − f(X))` over piecewise-linear
//! normalized Lipschitz allocations.
//!
//! An allocation is parametrized by its slopes on a fixed knot grid. Slopes in
//! `[0, 1]` make both `f` and `Id − f` non-decreasing and 1-Lipschitz, and
//! integrating from the knot at zero pins `f(0) = 0`. Because every such `f`
//! is monotone, `f(X)` and `X − f(X)` inherit the order of the sorted sample
//! and no re-sorting is needed per evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{eval, EmpiricalMeasure, RiskMeasureSpec};

pub const EVALUATION_BUDGET: u128 = 10_000_000;

/// Piecewise-linear `f` with `f(0) = 0` and slopes in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAllocation {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    // f at each knot
    values: Vec<f64>,
}

impl GridAllocation {
    /// `knots` strictly increasing and containing 0; one slope per interval
    /// (or a single slope when there is only one knot).
    pub fn new(knots: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("knots must be non-empty and strictly increasing"));
        }
        let zero = knots
            .iter()
            .position(|k| *k == 0.0)
            .ok_or_else(|| Error::input("knots must contain 0"))?;
        if slopes.len() != knots.len().saturating_sub(1).max(1) {
            return Err(Error::input(format!(
                "{} knots need {} slopes, got {}",
                knots.len(),
                knots.len().saturating_sub(1).max(1),
                slopes.len()
            )));
        }
        if slopes.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::input("slopes must lie in [0, 1]"));
        }
        let mut values = vec![0.0; knots.len()];
        for j in zero + 1..knots.len() {
            values[j] = values[j - 1] + slopes[j - 1] * (knots[j] - knots[j - 1]);
        }
        for j in (0..zero).rev() {
            values[j] = values[j + 1] - slopes[j] * (knots[j + 1] - knots[j]);
        }
        Ok(Self { knots, slopes, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    fn segment(&self, x: f64) -> usize {
        let last = self.slopes.len() - 1;
        self.knots.partition_point(|k| *k <= x).saturating_sub(1).min(last)
    }

    /// `f(x)`, extended linearly with the boundary slopes outside the knots.
    pub fn eval(&self, x: f64) -> f64 {
        let j = self.segment(x);
        self.values[j] + self.slopes[j] * (x - self.knots[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub slopes: Vec<f64>,
    pub knots: Vec<f64>,
    pub evaluations: u64,
    /// `(number of slopes, levels)`.
    pub resolution: (usize, usize),
}

impl OracleResult {
    pub fn allocation(&self) -> Result<GridAllocation> {
        GridAllocation::new(self.knots.clone(), self.slopes.clone())
    }

    pub fn mean_slope(&self) -> f64 {
        self.slopes.iter().sum::<f64>() / self.slopes.len() as f64
    }
}

/// Knots at `num_segments + 1` equally spaced sample quantiles, plus 0.
pub fn build_knots(m: &EmpiricalMeasure, num_segments: usize) -> Result<Vec<f64>> {
    if num_segments == 0 {
        return Err(Error::input("need at least one segment"));
    }
    let xs = m.samples();
    let n = xs.len();
    let mut knots: Vec<f64> = (0..=num_segments)
        .map(|j| xs[((j as f64 / num_segments as f64) * (n - 1) as f64).round() as usize])
        .collect();
    knots.push(0.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    Ok(knots)
}

/// Objective evaluator with the sample-to-segment lookup precomputed.
struct Objective<'a> {
    xs: &'a [f64],
    knots: &'a [f64],
    zero: usize,
    segment_of: Vec<usize>,
    spec1: &'a RiskMeasureSpec,
    spec2: &'a RiskMeasureSpec,
    values: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
    evaluations: u64,
}

impl<'a> Objective<'a> {
    fn new(m: &'a EmpiricalMeasure, knots: &'a [f64], spec1: &'a RiskMeasureSpec, spec2: &'a RiskMeasureSpec) -> Result<Self> {
        spec1.validate()?;
        spec2.validate()?;
        let xs = m.samples();
        let slopes = knots.len().saturating_sub(1).max(1);
        let segment_of = xs
            .iter()
            .map(|&x| knots.partition_point(|k| *k <= x).saturating_sub(1).min(slopes - 1))
            .collect();
        let zero = knots.iter().position(|k| *k == 0.0).ok_or_else(|| Error::input("knots must contain 0"))?;
        Ok(Self {
            xs,
            knots,
            zero,
            segment_of,
            spec1,
            spec2,
            values: vec![0.0; knots.len()],
            first: vec![0.0; xs.len()],
            second: vec![0.0; xs.len()],
            evaluations: 0,
        })
    }

    fn value(&mut self, slopes: &[f64]) -> Result<f64> {
        let k = self.knots;
        self.values[self.zero] = 0.0;
        for j in self.zero + 1..k.len() {
            self.values[j] = self.values[j - 1] + slopes[j - 1] * (k[j] - k[j - 1]);
        }
        for j in (0..self.zero).rev() {
            self.values[j] = self.values[j + 1] - slopes[j] * (k[j + 1] - k[j]);
        }
        for (i, &x) in self.xs.iter().enumerate() {
            let j = self.segment_of[i];
            let f = self.values[j] + slopes[j] * (x - k[j]);
            self.first[i] = f;
            self.second[i] = x - f;
        }
        self.evaluations += 1;
        let a = EmpiricalMeasure::new(&self.first)?;
        let b = EmpiricalMeasure::new(&self.second)?;
        Ok(eval(self.spec1, &a)? + eval(self.spec2, &b)?)
    }
}

fn level_slopes(levels_idx: &[usize], levels: usize) -> Vec<f64> {
    levels_idx.iter().map(|&i| i as f64 / levels as f64).collect()
}

/// Exhaustive search over slopes `θⱼ ∈ {0, 1/levels, …, 1}` on the knots of
/// [`build_knots`]. Ties go to the lexicographically smallest slope vector.
pub fn brute_force_infconv(
    m: &EmpiricalMeasure,
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
    num_segments: usize,
    levels: usize,
) -> Result<OracleResult> {
    if levels == 0 {
        return Err(Error::input("need at least one slope level"));
    }
    let knots = build_knots(m, num_segments)?;
    let dims = knots.len().saturating_sub(1).max(1);
    let total = (levels as u128 + 1).checked_pow(dims as u32).unwrap_or(u128::MAX);
    if total > EVALUATION_BUDGET {
        return Err(Error::Budget { evaluations: total, limit: EVALUATION_BUDGET });
    }
    let mut obj = Objective::new(m, &knots, spec1, spec2)?;
    // mixed-radix counter, most significant digit first
    let mut digits = vec![0usize; dims];
    let mut slopes = vec![0.0; dims];
    let mut best = (f64::INFINITY, digits.clone());
    loop {
        for (s, d) in slopes.iter_mut().zip(&digits) {
            *s = *d as f64 / levels as f64;
        }
        let v = obj.value(&slopes)?;
        if v < best.0 {
            best = (v, digits.clone());
        }
        let mut pos = dims;
        loop {
            if pos == 0 {
                let slopes = level_slopes(&best.1, levels);
                return Ok(OracleResult {
                    value: best.0,
                    slopes,
                    knots: knots.clone(),
                    evaluations: obj.evaluations,
                    resolution: (dims, levels),
                });
            }
            pos -= 1;
            if digits[pos] < levels {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Cyclic coordinate descent over the discrete slope levels, starting from
/// `start`. Each accepted move strictly decreases the objective; stops after
/// `sweeps` sweeps or once a full sweep changes nothing.
pub fn coordinate_descent_refine(
    start: &GridAllocation,
    m: &EmpiricalMeasure,
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
    sweeps: usize,
    levels: usize,
) -> Result<OracleResult> {
    if sweeps == 0 || levels == 0 {
        return Err(Error::input("need at least one sweep and one level"));
    }
    let knots = start.knots().to_vec();
    let mut obj = Objective::new(m, &knots, spec1, spec2)?;
    let mut slopes = start.slopes().to_vec();
    let mut best = obj.value(&slopes)?;
    for _ in 0..sweeps {
        let mut changed = false;
        for j in 0..slopes.len() {
            let current = slopes[j];
            let mut chosen = current;
            for l in 0..=levels {
                let cand = l as f64 / levels as f64;
                if cand == current {
                    continue;
                }
                slopes[j] = cand;
                let v = obj.value(&slopes)?;
                if v < best {
                    best = v;
                    chosen = cand;
                }
            }
            slopes[j] = chosen;
            changed |= chosen != current;
        }
        if !changed {
            break;
        }
    }
    Ok(OracleResult {
        value: best,
        resolution: (slopes.len(), levels),
        slopes,
        knots: knots.clone(),
        evaluations: obj.evaluations,
    })
}

/// Exact empirical inf-convolution of two spectral measures.
///
/// With knots at every sample point the objective is linear in the slopes,
/// so each slope sits at 0 or 1 according to the sign of its coefficient:
/// `θⱼ = 1` iff `Σ_{k>j} (w₂ₖ − w₁ₖ) < 0` for the order-statistic weights
/// `w₁, w₂`.
pub fn spectral_infconv_exact(
    m: &EmpiricalMeasure,
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
) -> Result<OracleResult> {
    spec1.validate()?;
    spec2.validate()?;
    if !spec1.is_spectral() || !spec2.is_spectral() {
        return Err(Error::Unsupported("exact oracle needs two spectral measures".into()));
    }
    let xs = m.samples();
    let n = xs.len();
    let weights = |spec: &RiskMeasureSpec| -> Vec<f64> {
        let mut prev = 0.0;
        (1..=n)
            .map(|k| {
                let cur = spec.spectral_mass_below(k as f64 / n as f64).unwrap_or(0.0);
                let w = cur - prev;
                prev = cur;
                w
            })
            .collect()
    };
    let (w1, w2) = (weights(spec1), weights(spec2));
    let mut value: f64 = -xs.iter().zip(&w2).map(|(x, w)| x * w).sum::<f64>();
    // tail[j] = Σ_{k>j} (w2_k − w1_k)
    let mut tail = 0.0;
    let mut step_slopes = vec![0.0; n.saturating_sub(1)];
    for j in (0..n.saturating_sub(1)).rev() {
        tail += w2[j + 1] - w1[j + 1];
        if tail < 0.0 {
            step_slopes[j] = 1.0;
            value += tail * (xs[j + 1] - xs[j]);
        }
    }
    // express as a grid allocation on the distinct sample points plus 0
    let mut knots: Vec<f64> = xs.to_vec();
    knots.push(0.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let slopes = if knots.len() == 1 {
        vec![0.0]
    } else {
        knots
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let j = xs.partition_point(|x| *x <= mid);
                if j == 0 || j >= n {
                    0.0
                } else {
                    step_slopes[j - 1]
                }
            })
            .collect()
    };
    Ok(OracleResult { value, resolution: (slopes.len(), 1), slopes, knots, evaluations: 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{DistributionSpec, RngSeed};

    fn uniform_sample(n: usize, seed: u64) -> EmpiricalMeasure {
        let s = DistributionSpec::UNIFORM.draw(n, RngSeed::new(seed, 0)).unwrap();
        EmpiricalMeasure::new(&s).unwrap()
    }

    fn es(a: f64) -> RiskMeasureSpec {
        RiskMeasureSpec::ExpectedShortfall { alpha: a }
    }
    fn entr(b: f64) -> RiskMeasureSpec {
        RiskMeasureSpec::Entropic { beta: b }
    }

    #[test]
    fn grid_allocation_is_anchored_and_lipschitz() {
        let g = GridAllocation::new(vec![-1.0, -0.2, 0.0, 0.5, 1.0], vec![0.25, 1.0, 0.0, 0.5]).unwrap();
        assert_eq!(g.eval(0.0), 0.0);
        assert!((g.eval(-0.2) + 0.2).abs() < 1e-15);
        assert!((g.eval(-1.0) + 0.4).abs() < 1e-15);
        assert_eq!(g.eval(0.5), 0.0);
        assert!((g.eval(1.0) - 0.25).abs() < 1e-15);
        assert!((g.eval(2.0) - 0.75).abs() < 1e-15);
        assert!((g.eval(-2.0) + 0.65).abs() < 1e-15);
        assert!(GridAllocation::new(vec![-1.0, 1.0], vec![0.5]).is_err());
        assert!(GridAllocation::new(vec![0.0, 1.0], vec![1.5]).is_err());
        assert!(GridAllocation::new(vec![0.0, 0.0], vec![0.5]).is_err());
    }

    #[test]
    fn knots_cover_sample_and_include_zero() {
        let m = uniform_sample(101, 4);
        let k = build_knots(&m, 4).unwrap();
        assert!(k.len() == 5 || k.len() == 6);
        assert!(k.contains(&0.0));
        assert!(k.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(k[0], m.min().min(0.0));
        assert_eq!(*k.last().unwrap(), m.max().max(0.0));
    }

    #[test]
    fn constant_sample_knots() {
        let m = EmpiricalMeasure::new(&[0.7; 5]).unwrap();
        let k = build_knots(&m, 3).unwrap();
        assert_eq!(k, vec![0.0, 0.7]);
        let r = brute_force_infconv(&m, &es(0.5), &entr(1.0), 3, 2).unwrap();
        assert_eq!(r.slopes.len(), 1);
        let m0 = EmpiricalMeasure::new(&[0.0; 3]).unwrap();
        assert_eq!(build_knots(&m0, 2).unwrap(), vec![0.0]);
        let r = brute_force_infconv(&m0, &es(0.5), &entr(1.0), 2, 2).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn es_pair_selects_identity() {
        let m = uniform_sample(200, 1);
        let r = brute_force_infconv(&m, &es(0.8), &es(0.7), 6, 4).unwrap();
        // the top segment lies above both VaR levels, so every slope ties there
        // and the lexicographic rule picks 0
        let (top, rest) = r.slopes.split_last().unwrap();
        assert!(rest.iter().all(|s| *s == 1.0), "{:?}", r.slopes);
        assert_eq!(*top, 0.0);
        assert!(r.knots[r.knots.len() - 2] >= m.samples()[(0.8 * 200.0) as usize]);
        let direct = eval(&es(0.8), &m).unwrap();
        assert!((r.value - direct).abs() < 1e-12);
        assert_eq!(r.evaluations as usize, 5usize.pow(r.slopes.len() as u32));
    }

    #[test]
    fn entropic_pair_slopes_near_proportional() {
        let m = uniform_sample(200, 2);
        let r = brute_force_infconv(&m, &entr(2.0), &entr(3.0), 6, 4).unwrap();
        assert!((r.mean_slope() - 0.4).abs() <= 0.25, "{:?}", r.slopes);
        let r = brute_force_infconv(&m, &entr(1.5), &entr(1.5), 6, 4).unwrap();
        assert!(r.slopes.iter().all(|s| (s - 0.5).abs() <= 0.25), "{:?}", r.slopes);
    }

    #[test]
    fn budget_guard() {
        let m = uniform_sample(50, 3);
        match brute_force_infconv(&m, &es(0.8), &es(0.7), 12, 9) {
            Err(Error::Budget { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coordinate_descent_fixed_point_and_monotone() {
        let m = uniform_sample(120, 5);
        let bf = brute_force_infconv(&m, &entr(2.0), &entr(3.0), 4, 4).unwrap();
        let start = bf.allocation().unwrap();
        let cd = coordinate_descent_refine(&start, &m, &entr(2.0), &entr(3.0), 5, 4).unwrap();
        assert_eq!(cd.slopes, bf.slopes);
        assert_eq!(cd.value, bf.value);

        let knots = build_knots(&m, 4).unwrap();
        let start = GridAllocation::new(knots.clone(), vec![1.0; knots.len() - 1]).unwrap();
        let v0 = coordinate_descent_refine(&start, &m, &entr(2.0), &entr(3.0), 1, 4).unwrap().value;
        let v1 = coordinate_descent_refine(&start, &m, &entr(2.0), &entr(3.0), 2, 4).unwrap().value;
        let v5 = coordinate_descent_refine(&start, &m, &entr(2.0), &entr(3.0), 10, 4).unwrap().value;
        assert!(v1 <= v0 && v5 <= v1);
        assert!((v5 - bf.value).abs() <= 0.01 * bf.value.abs());
    }

    #[test]
    fn exact_spectral_matches_brute_force_on_tiny_samples() {
        // knots at every sample point: the brute force over {0,1} slopes with
        // build_knots(N−1) sees the same grid
        for seed in 0..5 {
            let m = uniform_sample(7, 100 + seed);
            for (a, b) in [(es(0.8), es(0.7)), (es(0.3), es(0.6))] {
                let ex = spectral_infconv_exact(&m, &a, &b).unwrap();
                let bf = brute_force_infconv(&m, &a, &b, 6, 1).unwrap();
                assert!((ex.value - bf.value).abs() < 1e-12, "{} vs {}", ex.value, bf.value);
                let finer = brute_force_infconv(&m, &a, &b, 6, 4).unwrap();
                assert!(finer.value >= ex.value - 1e-12);
            }
        }
    }

    #[test]
    fn exact_spectral_es_pair_is_es_of_larger_level() {
        let m = uniform_sample(300, 8);
        let ex = spectral_infconv_exact(&m, &es(0.8), &es(0.7)).unwrap();
        assert!((ex.value - eval(&es(0.8), &m).unwrap()).abs() < 1e-12);
        let alloc = ex.allocation().unwrap();
        // value of the returned allocation reproduces the reported minimum
        let f: Vec<f64> = m.samples().iter().map(|&x| alloc.eval(x)).collect();
        let g: Vec<f64> = m.samples().iter().zip(&f).map(|(x, f)| x - f).collect();
        let v = eval(&es(0.8), &EmpiricalMeasure::new(&f).unwrap()).unwrap()
            + eval(&es(0.7), &EmpiricalMeasure::new(&g).unwrap()).unwrap();
        assert!((v - ex.value).abs() < 1e-12);
        assert!(spectral_infconv_exact(&m, &es(0.8), &entr(1.0)).is_err());
    }
}
