//! Training a pair of networks whose symmetrized outputs split a position
//! between two agents, and the metrics used to judge the result.

mod metrics;

pub use metrics::{
    anchored, fit_capped_loss, l2_error, metric_d, metric_d_batch, metric_d_mu, metric_d_mu_batch,
    spectral_stability_check, tail_bound, CappedLossFit, StabilityCheck, DEFAULT_GRID_PER_UNIT, DEFAULT_TRUNCATION,
};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{eval, eval_with_grad, EmpiricalMeasure, RiskMeasureSpec};
use crate::net::{ActivationKind, GradientBuffer, Mlp};
use crate::optim::{AdamState, PlateauState};
use crate::sampling::RngSeed;

/// Two nets `φ₁, φ₂`; the allocation is `f₁ = (φ₁ + Id − φ₂)/2`,
/// `f₂ = (φ₂ + Id − φ₁)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPair {
    pub phi1: Mlp,
    pub phi2: Mlp,
}

impl AllocationPair {
    pub fn new(phi1: Mlp, phi2: Mlp) -> Result<Self> {
        for (name, net) in [("phi1", &phi1), ("phi2", &phi2)] {
            let w = net.widths();
            if w[0] != 1 || w[w.len() - 1] != 1 {
                return Err(Error::input(format!("{name} must map 1 -> 1, has widths {w:?}")));
            }
        }
        Ok(Self { phi1, phi2 })
    }

    pub fn init(widths: &[usize], activation: ActivationKind, seed: RngSeed) -> Result<Self> {
        Self::new(Mlp::init(widths, activation, seed.child(0))?, Mlp::init(widths, activation, seed.child(1))?)
    }

    pub fn f1(&self, x: f64) -> f64 {
        0.5 * (self.phi1.eval(x) + x - self.phi2.eval(x))
    }

    pub fn f2(&self, x: f64) -> f64 {
        0.5 * (self.phi2.eval(x) + x - self.phi1.eval(x))
    }

    /// `(f₁(xᵢ), f₂(xᵢ))` for a whole batch.
    pub fn split(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p1 = self.phi1.forward(xs)?;
        let p2 = self.phi2.forward(xs)?;
        let f1 = xs.iter().zip(p1.iter().zip(&p2)).map(|(x, (a, b))| 0.5 * (a + x - b)).collect();
        let f2 = xs.iter().zip(p1.iter().zip(&p2)).map(|(x, (a, b))| 0.5 * (b + x - a)).collect();
        Ok((f1, f2))
    }
}

/// Pointwise average of the members' allocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAllocation {
    members: Vec<AllocationPair>,
}

impl EnsembleAllocation {
    pub fn new(members: Vec<AllocationPair>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::input("an ensemble needs at least one member"));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[AllocationPair] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn phi1(&self, x: f64) -> f64 {
        self.members.iter().map(|m| m.f1(x)).sum::<f64>() / self.members.len() as f64
    }

    pub fn phi2(&self, x: f64) -> f64 {
        self.members.iter().map(|m| m.f2(x)).sum::<f64>() / self.members.len() as f64
    }

    /// Mean and population std of `f₁` and `f₂` across members at each point:
    /// `(phi1_mean, phi1_std, phi2_mean, phi2_std)`.
    pub fn curve(&self, xs: &[f64]) -> Result<Vec<(f64, f64, f64, f64)>> {
        let splits = self.members.iter().map(|m| m.split(xs)).collect::<Result<Vec<_>>>()?;
        Ok((0..xs.len())
            .map(|i| {
                let (m1, s1) = mean_std(splits.iter().map(|s| s.0[i]));
                let (m2, s2) = mean_std(splits.iter().map(|s| s.1[i]));
                (m1, s1, m2, s2)
            })
            .collect())
    }

    /// `Φ̂₁(xᵢ)` for a whole batch.
    pub fn phi1_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; xs.len()];
        for m in &self.members {
            for (a, f) in acc.iter_mut().zip(m.split(xs)?.0) {
                *a += f;
            }
        }
        let n = self.members.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let first = values.clone().next().unwrap_or(0.0);
    let mean = first + values.clone().map(|v| v - first).sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_samples: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
    pub threshold: f64,
    pub factor: f64,
    pub min_lr: f64,
    pub ensemble_size: usize,
    pub widths: Vec<usize>,
    pub activation: ActivationKind,
    pub seed: u64,
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            n_samples: 20_000,
            batch_size: 1_000,
            epochs: 150,
            lr: 1e-4,
            patience: 1_000,
            threshold: 1e-6,
            factor: PlateauState::DEFAULT_FACTOR,
            min_lr: 0.0,
            ensemble_size: 3,
            widths: vec![1, 100, 100, 100, 1],
            activation: ActivationKind::Linear,
            seed: 0,
        }
    }

    pub fn paper() -> Self {
        Self { n_samples: 100_000, epochs: 300, lr: 1e-6, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.batch_size == 0 || self.ensemble_size == 0 {
            return Err(Error::input("n_samples, batch_size and ensemble_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::input(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.widths.first() != Some(&1) || self.widths.last() != Some(&1) || self.widths.contains(&0) {
            return Err(Error::input(format!("widths must start and end with 1, got {:?}", self.widths)));
        }
        PlateauState::new(self.patience, self.threshold, self.factor, self.min_lr)?;
        Ok(())
    }

    /// Seed stream for the training data.
    pub fn data_seed(&self) -> RngSeed {
        RngSeed::new(self.seed, 0)
    }

    /// Seed of ensemble member `i`.
    pub fn member_seed(&self, i: usize) -> RngSeed {
        RngSeed::new(self.seed, 1).child(i as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    /// `member_losses[i][e]`: mean batch loss of member `i` in epoch `e`.
    pub member_losses: Vec<Vec<f64>>,
    pub member_lrs: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Full-dataset loss of each trained member.
    pub final_losses: Vec<f64>,
}

impl LossHistory {
    pub fn from_members(member_losses: Vec<Vec<f64>>, member_lrs: Vec<Vec<f64>>, final_losses: Vec<f64>) -> Self {
        let epochs = member_losses.iter().map(Vec::len).min().unwrap_or(0);
        let (mean, std) = (0..epochs).map(|e| mean_std(member_losses.iter().map(|l| l[e]))).unzip();
        Self { member_losses, member_lrs, mean, std, final_losses }
    }

    pub fn epochs(&self) -> usize {
        self.mean.len()
    }

    /// Mean learning rate across members in epoch `e`.
    pub fn lr(&self, e: usize) -> f64 {
        mean_std(self.member_lrs.iter().map(|l| l[e])).0
    }

    /// Mean and population std of the final losses.
    pub fn final_stats(&self) -> (f64, f64) {
        mean_std(self.final_losses.iter().copied())
    }
}

/// Loss value and the cotangents with respect to `φ₁(X)` and `φ₂(X)`.
fn loss_and_upstream(
    xs: &[f64],
    p1: &[f64],
    p2: &[f64],
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let r1 = |v: &[f64]| eval_with_grad(spec1, &EmpiricalMeasure::new(v)?);
    let r2 = |v: &[f64]| eval_with_grad(spec2, &EmpiricalMeasure::new(v)?);
    let x_minus = |p: &[f64]| xs.iter().zip(p).map(|(x, p)| x - p).collect::<Vec<_>>();
    let (a, ga) = r1(p1)?;
    let (b, gb) = r2(p2)?;
    let (c, gc) = r1(&x_minus(p2))?;
    let (d, gd) = r2(&x_minus(p1))?;
    let up1 = ga.iter().zip(&gd).map(|(a, d)| 0.5 * (a - d)).collect();
    let up2 = gb.iter().zip(&gc).map(|(b, c)| 0.5 * (b - c)).collect();
    Ok((0.5 * (a + b + c + d), up1, up2))
}

/// The symmetrized loss on `batch` with gradients for both nets.
pub fn loss(
    pair: &AllocationPair,
    batch: &[f64],
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
) -> Result<(f64, GradientBuffer, GradientBuffer)> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let c1 = pair.phi1.forward_cached(batch)?;
    let c2 = pair.phi2.forward_cached(batch)?;
    let (value, up1, up2) = loss_and_upstream(batch, c1.output(), c2.output(), spec1, spec2)
        .map_err(|e| training_error(0, 0, e.to_string(), vec![]))?;
    let g1 = pair.phi1.backward_cached(&c1, &up1)?;
    let g2 = pair.phi2.backward_cached(&c2, &up2)?;
    if !value.is_finite() || !g1.is_finite() || !g2.is_finite() {
        return Err(training_error(0, 0, "non-finite loss or gradient", vec![]));
    }
    Ok((value, g1, g2))
}

/// Loss value only.
pub fn loss_value(pair: &AllocationPair, xs: &[f64], spec1: &RiskMeasureSpec, spec2: &RiskMeasureSpec) -> Result<f64> {
    let p1 = pair.phi1.forward(xs)?;
    let p2 = pair.phi2.forward(xs)?;
    let x_minus = |p: &[f64]| xs.iter().zip(p).map(|(x, p)| x - p).collect::<Vec<_>>();
    let e = |spec, v: &[f64]| eval(spec, &EmpiricalMeasure::new(v)?);
    Ok(0.5 * (e(spec1, &p1)? + e(spec2, &p2)? + e(spec1, &x_minus(&p2))? + e(spec2, &x_minus(&p1))?))
}

/// `ρ₁(f₁(X)) + ρ₂(X − f₁(X))` for given values `f₁(xᵢ)`.
pub fn allocation_value(xs: &[f64], f1: &[f64], spec1: &RiskMeasureSpec, spec2: &RiskMeasureSpec) -> Result<f64> {
    if xs.len() != f1.len() {
        return Err(Error::input("sample and allocation lengths differ"));
    }
    let rest: Vec<f64> = xs.iter().zip(f1).map(|(x, f)| x - f).collect();
    Ok(eval(spec1, &EmpiricalMeasure::new(f1)?)? + eval(spec2, &EmpiricalMeasure::new(&rest)?)?)
}

fn training_error(epoch: usize, batch: usize, message: impl Into<String>, history: Vec<f64>) -> Error {
    Error::Training { epoch, batch, message: message.into(), history }
}

#[derive(Debug, Clone)]
pub struct MemberRun {
    pub pair: AllocationPair,
    pub epoch_losses: Vec<f64>,
    pub lrs: Vec<f64>,
    /// Loss on the full dataset after training.
    pub final_loss: f64,
}

pub fn train_member(
    config: &TrainConfig,
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
    data: &[f64],
    member_seed: RngSeed,
) -> Result<MemberRun> {
    config.validate()?;
    spec1.validate()?;
    spec2.validate()?;
    if data.is_empty() {
        return Err(Error::input("empty training data"));
    }
    let mut pair = AllocationPair::init(&config.widths, config.activation, member_seed)?;
    let mut adam1 = AdamState::new(pair.phi1.num_params(), config.lr);
    let mut adam2 = AdamState::new(pair.phi2.num_params(), config.lr);
    let mut plateau = PlateauState::new(config.patience, config.threshold, config.factor, config.min_lr)?;
    let mut rng = member_seed.child(2).rng();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut lrs = Vec::with_capacity(config.epochs);
    let mut lr = config.lr;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        adam1.lr = lr;
        adam2.lr = lr;
        let mut total = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| data[i]));
            let fail = |e: Error, hist: &[f64]| match e {
                Error::Training { message, .. } => training_error(epoch, b, message, hist.to_vec()),
                other => training_error(epoch, b, other.to_string(), hist.to_vec()),
            };
            let (value, g1, g2) = loss(&pair, &batch, spec1, spec2).map_err(|e| fail(e, &epoch_losses))?;
            adam1.step(pair.phi1.params_mut(), g1.as_slice()).map_err(|e| fail(e, &epoch_losses))?;
            adam2.step(pair.phi2.params_mut(), g2.as_slice()).map_err(|e| fail(e, &epoch_losses))?;
            total += value;
            batches += 1;
        }
        let mean = total / batches as f64;
        epoch_losses.push(mean);
        lrs.push(lr);
        lr = plateau.step(mean, lr);
    }
    let final_loss = loss_value(&pair, data, spec1, spec2)?;
    if !final_loss.is_finite() {
        return Err(training_error(config.epochs, 0, "non-finite final loss", epoch_losses));
    }
    Ok(MemberRun { pair, epoch_losses, lrs, final_loss })
}

/// Trains `config.ensemble_size` members from [`TrainConfig::member_seed`].
pub fn train_ensemble(
    config: &TrainConfig,
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
    data: &[f64],
) -> Result<(EnsembleAllocation, LossHistory)> {
    let seeds: Vec<RngSeed> = (0..config.ensemble_size).map(|i| config.member_seed(i)).collect();
    train_ensemble_with_seeds(config, spec1, spec2, data, &seeds)
}

pub fn train_ensemble_with_seeds(
    config: &TrainConfig,
    spec1: &RiskMeasureSpec,
    spec2: &RiskMeasureSpec,
    data: &[f64],
    seeds: &[RngSeed],
) -> Result<(EnsembleAllocation, LossHistory)> {
    if seeds.is_empty() {
        return Err(Error::input("an ensemble needs at least one member"));
    }
    let runs: Vec<Result<MemberRun>> =
        seeds.par_iter().map(|&s| train_member(config, spec1, spec2, data, s)).collect();
    let failed: Vec<usize> = runs.iter().enumerate().filter(|(_, r)| r.is_err()).map(|(i, _)| i).collect();
    if !failed.is_empty() {
        let mut messages = vec![];
        let histories = runs
            .into_iter()
            .map(|r| match r {
                Ok(run) => run.epoch_losses,
                Err(Error::Training { history, epoch, batch, message }) => {
                    messages.push(format!("epoch {epoch}, batch {batch}: {message}"));
                    history
                }
                Err(e) => {
                    messages.push(e.to_string());
                    vec![]
                }
            })
            .collect();
        return Err(Error::Ensemble { members: failed, message: messages.join("; "), histories });
    }
    let runs: Vec<MemberRun> = runs.into_iter().map(|r| r.expect("checked above")).collect();
    let final_losses = runs.iter().map(|r| r.final_loss).collect();
    let lrs = runs.iter().map(|r| r.lrs.clone()).collect();
    let losses = runs.iter().map(|r| r.epoch_losses.clone()).collect();
    let members = runs.into_iter().map(|r| r.pair).collect();
    Ok((EnsembleAllocation::new(members)?, LossHistory::from_members(losses, lrs, final_losses)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::DistributionSpec;

    fn es(a: f64) -> RiskMeasureSpec {
        RiskMeasureSpec::ExpectedShortfall { alpha: a }
    }
    fn entr(b: f64) -> RiskMeasureSpec {
        RiskMeasureSpec::Entropic { beta: b }
    }

    fn affine_net(w: f64, b: f64) -> Mlp {
        Mlp::from_parts(&[1, 1], ActivationKind::Linear, vec![vec![w]], vec![vec![b]]).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            n_samples: 200,
            batch_size: 50,
            epochs: 5,
            lr: 1e-3,
            ensemble_size: 2,
            widths: vec![1, 8, 1],
            activation: ActivationKind::Tanh,
            seed: 3,
            ..TrainConfig::desk()
        }
    }

    #[test]
    fn identity_and_zero_on_constant_batch() {
        let pair = AllocationPair::new(affine_net(1.0, 0.0), affine_net(0.0, 0.0)).unwrap();
        let (v, _, _) = loss(&pair, &[0.3; 10], &es(0.5), &es(0.5)).unwrap();
        assert!((v + 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_nets_give_mean_of_risks() {
        let pair = AllocationPair::new(affine_net(0.0, 0.0), affine_net(0.0, 0.0)).unwrap();
        let xs = DistributionSpec::UNIFORM.draw(64, RngSeed::new(1, 0)).unwrap();
        let m = EmpiricalMeasure::new(&xs).unwrap();
        let (v, _, _) = loss(&pair, &xs, &entr(1.0), &es(0.6)).unwrap();
        let expected = 0.5 * (eval(&entr(1.0), &m).unwrap() + eval(&es(0.6), &m).unwrap());
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn swap_symmetry() {
        let a = Mlp::init(&[1, 5, 1], ActivationKind::Tanh, RngSeed::new(1, 1)).unwrap();
        let b = Mlp::init(&[1, 5, 1], ActivationKind::Tanh, RngSeed::new(2, 1)).unwrap();
        let xs = DistributionSpec::UNIFORM.draw(64, RngSeed::new(1, 0)).unwrap();
        let v1 = loss_value(&AllocationPair::new(a.clone(), b.clone()).unwrap(), &xs, &entr(1.0), &es(0.6)).unwrap();
        let v2 = loss_value(&AllocationPair::new(b, a).unwrap(), &xs, &es(0.6), &entr(1.0)).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let pair = AllocationPair::init(&[1, 4, 1], ActivationKind::Tanh, RngSeed::new(9, 0)).unwrap();
        let xs = DistributionSpec::UNIFORM.draw(32, RngSeed::new(2, 0)).unwrap();
        let (s1, s2) = (entr(0.7), entr(1.3));
        let (_, g1, g2) = loss(&pair, &xs, &s1, &s2).unwrap();
        let h = 1e-6;
        for which in 0..2 {
            let grads = if which == 0 { &g1 } else { &g2 };
            for k in 0..pair.phi1.num_params() {
                let bump = |d: f64| {
                    let mut p = pair.clone();
                    let net = if which == 0 { &mut p.phi1 } else { &mut p.phi2 };
                    net.params_mut()[k] += d;
                    loss_value(&p, &xs, &s1, &s2).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let g = grads.as_slice()[k];
                assert!((fd - g).abs() <= 1e-6 * (1.0 + g.abs()), "net {which} param {k}: {fd} vs {g}");
            }
        }
    }

    #[test]
    fn allocation_sums_to_identity() {
        let pair = AllocationPair::init(&[1, 6, 6, 1], ActivationKind::ReLU, RngSeed::new(4, 0)).unwrap();
        for i in -50..=50 {
            let x = i as f64 * 0.07;
            assert!((pair.f1(x) + pair.f2(x) - x).abs() <= 1e-12);
        }
        let ens = EnsembleAllocation::new(vec![pair.clone(), pair]).unwrap();
        assert!((ens.phi1(0.3) + ens.phi2(0.3) - 0.3).abs() <= 1e-12);
    }

    #[test]
    fn rebalancing_cash_leaves_value() {
        let xs = DistributionSpec::UNIFORM.draw(100, RngSeed::new(5, 0)).unwrap();
        let f1: Vec<f64> = xs.iter().map(|x| 0.4 * x).collect();
        let shifted: Vec<f64> = f1.iter().map(|f| f + 0.37).collect();
        let a = allocation_value(&xs, &f1, &entr(2.0), &es(0.4)).unwrap();
        let b = allocation_value(&xs, &shifted, &entr(2.0), &es(0.4)).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainConfig { epochs: 0, ..small_config() };
        let xs = DistributionSpec::UNIFORM.draw(200, RngSeed::new(5, 0)).unwrap();
        let run = train_member(&cfg, &entr(1.0), &entr(1.0), &xs, RngSeed::new(1, 1)).unwrap();
        assert!(run.epoch_losses.is_empty());
        assert_eq!(run.pair, AllocationPair::init(&cfg.widths, cfg.activation, RngSeed::new(1, 1)).unwrap());
    }

    #[test]
    fn training_is_deterministic_and_lowers_loss() {
        let cfg = TrainConfig { epochs: 30, ..small_config() };
        let xs = DistributionSpec::UNIFORM.draw(200, RngSeed::new(5, 0)).unwrap();
        let a = train_member(&cfg, &entr(2.0), &entr(3.0), &xs, RngSeed::new(1, 1)).unwrap();
        let b = train_member(&cfg, &entr(2.0), &entr(3.0), &xs, RngSeed::new(1, 1)).unwrap();
        assert_eq!(a.pair, b.pair);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert!(a.epoch_losses.last().unwrap() <= &a.epoch_losses[0]);
    }

    #[test]
    fn identical_seeds_give_zero_std() {
        let cfg = small_config();
        let xs = DistributionSpec::UNIFORM.draw(200, RngSeed::new(5, 0)).unwrap();
        let seeds = [RngSeed::new(7, 1); 3];
        let (ens, hist) = train_ensemble_with_seeds(&cfg, &es(0.8), &es(0.7), &xs, &seeds).unwrap();
        assert!(hist.std.iter().all(|s| *s == 0.0));
        assert_eq!(hist.final_stats().1, 0.0);
        assert_eq!(ens.len(), 3);
        assert_eq!(hist.epochs(), cfg.epochs);
    }

    #[test]
    fn single_member_ensemble_is_member() {
        let cfg = TrainConfig { ensemble_size: 1, ..small_config() };
        let xs = DistributionSpec::UNIFORM.draw(200, RngSeed::new(5, 0)).unwrap();
        let (ens, _) = train_ensemble(&cfg, &entr(1.0), &entr(2.0), &xs).unwrap();
        let run = train_member(&cfg, &entr(1.0), &entr(2.0), &xs, cfg.member_seed(0)).unwrap();
        for x in [-0.9, 0.0, 0.4] {
            assert_eq!(ens.phi1(x), run.pair.f1(x));
        }
    }

    #[test]
    fn averaged_allocation_beats_mean_member_loss() {
        let cfg = TrainConfig { ensemble_size: 3, ..small_config() };
        let xs = DistributionSpec::UNIFORM.draw(200, RngSeed::new(5, 0)).unwrap();
        let (s1, s2) = (es(0.9), entr(0.3));
        let (ens, hist) = train_ensemble(&cfg, &s1, &s2, &xs).unwrap();
        let avg = allocation_value(&xs, &ens.phi1_batch(&xs).unwrap(), &s1, &s2).unwrap();
        assert!(avg <= hist.final_stats().0 + 1e-9);
    }

    #[test]
    fn divergence_reports_history() {
        let cfg = TrainConfig { epochs: 3, lr: 1e300, activation: ActivationKind::Linear, ..small_config() };
        let xs = DistributionSpec::UNIFORM.draw(200, RngSeed::new(5, 0)).unwrap();
        match train_ensemble(&cfg, &entr(0.01), &entr(0.01), &xs) {
            Err(Error::Ensemble { members, histories, .. }) => {
                assert!(!members.is_empty());
                assert_eq!(histories.len(), cfg.ensemble_size);
            }
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::desk().validate().is_ok());
        assert!(TrainConfig::paper().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::desk() }.validate().is_err());
        assert!(TrainConfig { widths: vec![2, 3, 1], ..TrainConfig::desk() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..TrainConfig::desk() }.validate().is_err());
    }
}
