//! Adam with bias correction and a reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(num_params: usize, lr: f64) -> Self {
        Self::with_hyperparameters(num_params, lr, Self::DEFAULT_BETA1, Self::DEFAULT_BETA2, Self::DEFAULT_EPS)
            .expect("default Adam hyperparameters are valid")
    }

    pub fn with_hyperparameters(num_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) || !(lr >= 0.0) {
            return Err(Error::Optimizer(format!(
                "invalid Adam hyperparameters lr={lr} beta1={beta1} beta2={beta2} eps={eps}"
            )));
        }
        Ok(Self { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0, beta1, beta2, eps, lr })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update of `params` in place. A non-finite gradient leaves both
    /// `params` and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Optimizer(format!(
                "shape mismatch: state {}, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Optimizer(format!("non-finite gradient at index {i}")));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Reduce-on-plateau with an absolute improvement threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    best: f64,
    bad_epochs: usize,
    pub patience: usize,
    pub threshold: f64,
    pub factor: f64,
    pub min_lr: f64,
}

impl PlateauState {
    pub const DEFAULT_FACTOR: f64 = 0.1;

    pub fn new(patience: usize, threshold: f64, factor: f64, min_lr: f64) -> Result<Self> {
        if patience == 0 || !(factor > 0.0 && factor < 1.0) || !(threshold >= 0.0) || !(min_lr >= 0.0) {
            return Err(Error::input(format!(
                "invalid plateau parameters patience={patience} factor={factor} threshold={threshold} min_lr={min_lr}"
            )));
        }
        Ok(Self { best: f64::INFINITY, bad_epochs: 0, patience, threshold, factor, min_lr })
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds one epoch loss; returns the learning rate for the next epoch.
    pub fn step(&mut self, epoch_loss: f64, current_lr: f64) -> f64 {
        if epoch_loss < self.best - self.threshold {
            self.best = epoch_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            self.bad_epochs = 0;
            return (current_lr * self.factor).max(self.min_lr);
        }
        current_lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..100 {
            s.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        let mut s = AdamState::new(1, 0.1);
        let mut p = vec![0.0];
        s.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_leaves_state() {
        let mut s = AdamState::new(2, 0.1);
        let mut p = vec![1.0, 1.0];
        s.step(&mut p, &[0.5, 0.5]).unwrap();
        let (before_s, before_p) = (s.clone(), p.clone());
        assert!(s.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert_eq!(s, before_s);
        assert_eq!(p, before_p);
    }

    #[test]
    fn converges_on_square() {
        let mut s = AdamState::new(1, 1e-2);
        let mut p = vec![1.0];
        for _ in 0..10_000 {
            let g = 2.0 * p[0];
            s.step(&mut p, &[g]).unwrap();
        }
        assert!(p[0].abs() <= 1e-3, "{}", p[0]);
    }

    #[test]
    fn deterministic_trajectories() {
        let run = || {
            let mut s = AdamState::new(2, 0.05);
            let mut p = vec![0.3, -0.7];
            for i in 0..50 {
                let g = [p[0] - i as f64 * 0.01, p[1].sin()];
                s.step(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sign_flip_equivariance() {
        let g = [0.3, -1.7, 2.5e-3];
        let mut a = vec![0.0; 3];
        let mut b = vec![0.0; 3];
        AdamState::new(3, 0.01).step(&mut a, &g).unwrap();
        AdamState::new(3, 0.01).step(&mut b, &g.map(|v| -v)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() <= 1e-12);
        }
    }

    #[test]
    fn plateau_never_reduces_on_improvement() {
        let mut p = PlateauState::new(2, 1e-6, 0.1, 0.0).unwrap();
        let mut lr = 1.0;
        for i in 0..50 {
            lr = p.step(10.0 - i as f64, lr);
        }
        assert_eq!(lr, 1.0);
    }

    #[test]
    fn plateau_drops_once_after_patience() {
        let patience = 5;
        let mut p = PlateauState::new(patience, 1e-6, 0.1, 0.0).unwrap();
        let mut lr = 1.0;
        // first epoch sets the best value, then patience + 1 epochs without improvement
        lr = p.step(3.0, lr);
        for i in 0..patience {
            lr = p.step(3.0, lr);
            assert_eq!(lr, 1.0, "epoch {i}");
        }
        lr = p.step(3.0, lr);
        assert_eq!(lr, 0.1);
        for _ in 0..patience {
            lr = p.step(3.0, lr);
        }
        assert_eq!(lr, 0.1);
    }

    #[test]
    fn plateau_threshold_is_absolute() {
        let mut p = PlateauState::new(1, 1e-6, 0.5, 0.0).unwrap();
        let mut lr = 1.0;
        lr = p.step(1.0, lr);
        lr = p.step(1.0 - 1e-7, lr);
        lr = p.step(1.0 - 2e-7, lr);
        assert_eq!(lr, 0.5);
    }

    #[test]
    fn plateau_respects_min_lr() {
        let mut p = PlateauState::new(1, 0.0, 0.1, 0.05).unwrap();
        let mut lr = 1.0;
        let mut seen = vec![];
        for _ in 0..20 {
            lr = p.step(1.0, lr);
            seen.push(lr);
        }
        assert!(seen.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*seen.last().unwrap(), 0.05);
        assert!(PlateauState::new(0, 0.0, 0.1, 0.0).is_err());
        assert!(PlateauState::new(1, 0.0, 1.0, 0.0).is_err());
    }
}
