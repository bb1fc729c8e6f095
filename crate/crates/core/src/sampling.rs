//! Reproducible draws from the test distributions, empirical measures and
//! one-dimensional Wasserstein distances.
//!
//! Randomness comes from ChaCha12 (`rand_chacha::ChaCha12Rng`) seeded with
//! `seed_from_u64(seed)` and switched to the 64-bit stream `stream`. Distinct
//! streams of the same seed are independent, so ensemble members and data
//! draws can be generated in any order or in parallel.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::spec::Parser;
use crate::measures::EmpiricalMeasure;
use crate::quad::adaptive_simpson;

/// A `(seed, stream)` pair; fully determines a random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derived sub-stream; the same `(self, index)` always yields the same child.
    pub fn child(self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index.wrapping_add(1))),
        }
    }

    pub fn rng(self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
    /// Normal restricted to `[lo, hi]`.
    TruncNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    /// Law of `−B` with `B ~ Beta(a, b)`.
    NegBeta { a: f64, b: f64 },
}

impl DistributionSpec {
    pub const UNIFORM: Self = DistributionSpec::Uniform { lo: -1.0, hi: 1.0 };
    pub const TRUNC_NORMAL: Self = DistributionSpec::TruncNormal { mean: 0.0, sd: 1.0, lo: -3.0, hi: 3.0 };
    pub const NEG_BETA: Self = DistributionSpec::NegBeta { a: 2.0, b: 5.0 };

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistributionSpec::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            DistributionSpec::TruncNormal { mean, sd, lo, hi } => {
                mean.is_finite() && sd > 0.0 && sd.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi
            }
            DistributionSpec::NegBeta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid distribution parameters: {self}")))
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            DistributionSpec::Uniform { lo, hi } | DistributionSpec::TruncNormal { lo, hi, .. } => (lo, hi),
            DistributionSpec::NegBeta { .. } => (-1.0, 0.0),
        }
    }

    /// Probability density, normalized on the support.
    pub fn pdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let (lo, hi) = self.support();
        let kernel = move |x: f64| -> f64 {
            if x < lo || x > hi {
                return 0.0;
            }
            match *self {
                DistributionSpec::Uniform { .. } => 1.0,
                DistributionSpec::TruncNormal { mean, sd, .. } => {
                    let z = (x - mean) / sd;
                    (-0.5 * z * z).exp()
                }
                DistributionSpec::NegBeta { a, b } => {
                    let t = -x;
                    t.max(0.0).powf(a - 1.0) * (1.0 - t).max(0.0).powf(b - 1.0)
                }
            }
        };
        let mass = adaptive_simpson(&kernel, lo, hi, 1e-13);
        move |x| kernel(x) / mass
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionSpec::NegBeta { a, b } => -a / (a + b),
            DistributionSpec::TruncNormal { .. } => {
                let (lo, hi) = self.support();
                let p = self.pdf();
                adaptive_simpson(&|x| x * p(x), lo, hi, 1e-12)
            }
        }
    }

    pub fn draw(&self, n: usize, seed: RngSeed) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::input("sample size must be positive"));
        }
        self.validate()?;
        let mut rng = seed.rng();
        let out = match *self {
            DistributionSpec::Uniform { lo, hi } => {
                (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
            }
            DistributionSpec::TruncNormal { mean, sd, lo, hi } => (0..n)
                .map(|_| loop {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let x = mean + sd * z;
                    if (lo..=hi).contains(&x) {
                        break x;
                    }
                })
                .collect(),
            DistributionSpec::NegBeta { a, b } => {
                // Gamma uses the Marsaglia–Tsang sampler
                let ga = Gamma::new(a, 1.0).map_err(|e| Error::input(e.to_string()))?;
                let gb = Gamma::new(b, 1.0).map_err(|e| Error::input(e.to_string()))?;
                (0..n)
                    .map(|_| {
                        let g1: f64 = ga.sample(&mut rng);
                        let g2: f64 = gb.sample(&mut rng);
                        -g1 / (g1 + g2)
                    })
                    .collect()
            }
        };
        Ok(out)
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionSpec::Uniform { lo, hi } => write!(f, "uniform({lo:?},{hi:?})"),
            DistributionSpec::TruncNormal { mean, sd, lo, hi } => {
                write!(f, "truncnormal({mean:?},{sd:?},{lo:?},{hi:?})")
            }
            DistributionSpec::NegBeta { a, b } => write!(f, "negbeta({a:?},{b:?})"),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser::new(s);
        let name = p.ident();
        p.expect(b'(')?;
        let mut args = vec![p.number()?];
        while p.eat(b',') {
            args.push(p.number()?);
        }
        p.expect(b')')?;
        p.expect_end()?;
        let spec = match (name.as_str(), args.as_slice()) {
            ("uniform", &[lo, hi]) => DistributionSpec::Uniform { lo, hi },
            ("truncnormal", &[mean, sd, lo, hi]) => DistributionSpec::TruncNormal { mean, sd, lo, hi },
            ("negbeta", &[a, b]) => DistributionSpec::NegBeta { a, b },
            ("uniform" | "truncnormal" | "negbeta", _) => {
                return Err(Error::Parse {
                    column: 1,
                    message: format!("wrong number of arguments for '{name}'"),
                })
            }
            _ => {
                return Err(Error::Parse {
                    column: 1,
                    message: format!("unknown distribution '{name}'"),
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn make_empirical(sample: &[f64]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(sample)
}

/// `W_p` between two empirical measures on the line.
///
/// Integrates `|F_a⁻¹(u) − F_b⁻¹(u)|ᵖ` over the merged grid of jump points
/// `k/N_a`, `j/N_b`; both quantile functions are constant in between.
pub fn wasserstein_p(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("wasserstein distance of an empty measure"));
    }
    if !(p >= 1.0) {
        return Err(Error::input(format!("wasserstein order {p} must be >= 1")));
    }
    let (xs, ys) = (a.samples(), b.samples());
    let pow = |d: f64| if p == 1.0 { d } else { d.powf(p) };
    let total = if xs.len() == ys.len() {
        xs.iter().zip(ys).map(|(x, y)| pow((x - y).abs())).sum::<f64>() / xs.len() as f64
    } else {
        let (na, nb) = (xs.len(), ys.len());
        let (mut i, mut j) = (0usize, 0usize);
        let mut prev = 0.0;
        let mut acc = 0.0;
        // walk breakpoints (i+1)/na and (j+1)/nb in exact rational order
        while i < na && j < nb {
            let (lhs, rhs) = ((i + 1) as u128 * nb as u128, (j + 1) as u128 * na as u128);
            let next = if lhs <= rhs { (i + 1) as f64 / na as f64 } else { (j + 1) as f64 / nb as f64 };
            acc += (next - prev) * pow((xs[i] - ys[j]).abs());
            prev = next;
            if lhs <= rhs {
                i += 1;
            }
            if rhs <= lhs {
                j += 1;
            }
        }
        acc
    };
    Ok(total.powf(1.0 / p))
}
