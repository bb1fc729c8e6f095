use crate::error::{Error, Result};

/// Uniform-weight measure on a finite sample, stored sorted.
///
/// `original_order()[k]` is the input index of the `k`-th smallest sample.
/// Ties keep their input order (stable sort), which pins down the
/// subgradient used for quantile-based measures.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    order: Vec<usize>,
}

impl EmpiricalMeasure {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("empirical measure needs at least one sample"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "sample entry {i} is not finite ({})",
                values[i]
            )));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        if !values.windows(2).all(|w| w[0] <= w[1]) {
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        }
        let samples = order.iter().map(|&i| values[i]).collect();
        Ok(Self { samples, order })
    }

    /// Sorted samples, ascending.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn original_order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Scatters a vector indexed by sorted position back to input order.
    pub fn to_input_order(&self, sorted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; sorted.len()];
        for (k, &i) in self.order.iter().enumerate() {
            out[i] = sorted[k];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_and_records_permutation() {
        let m = EmpiricalMeasure::new(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.samples(), &[1.0, 2.0, 3.0]);
        // 1-based (2,3,1)
        assert_eq!(m.original_order(), &[1, 2, 0]);
    }

    #[test]
    fn sorted_input_gives_identity() {
        let m = EmpiricalMeasure::new(&[-1.0, 0.0, 4.0]).unwrap();
        assert_eq!(m.original_order(), &[0, 1, 2]);
    }

    #[test]
    fn duplicates_keep_multiplicity_and_order() {
        let m = EmpiricalMeasure::new(&[1.0, 1.0]).unwrap();
        assert_eq!(m.samples(), &[1.0, 1.0]);
        assert_eq!(m.original_order(), &[0, 1]);
        let m = EmpiricalMeasure::new(&[2.0, 1.0, 2.0, 1.0]).unwrap();
        assert_eq!(m.original_order(), &[1, 3, 0, 2]);
    }

    #[test]
    fn rejects_nan_and_empty() {
        assert!(EmpiricalMeasure::new(&[1.0, f64::NAN]).is_err());
        assert!(EmpiricalMeasure::new(&[f64::INFINITY]).is_err());
        assert!(EmpiricalMeasure::new(&[]).is_err());
    }

    #[test]
    fn scatter_back() {
        let m = EmpiricalMeasure::new(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.to_input_order(m.samples()), vec![3.0, 1.0, 2.0]);
    }
}
