//! Shared fixtures for the benchmarks in `benches/`.

use infconv_core::{DistributionSpec, EmpiricalMeasure, RngSeed};

/// `n` draws from `U[-1, 1]` with a fixed seed.
pub fn uniform_sample(n: usize, stream: u64) -> Vec<f64> {
    DistributionSpec::UNIFORM.draw(n, RngSeed::new(7, stream)).expect("valid sample size")
}

pub fn uniform_measure(n: usize, stream: u64) -> EmpiricalMeasure {
    EmpiricalMeasure::new(&uniform_sample(n, stream)).expect("non-empty sample")
}
