//! ADAM and SPSA, the halving learning-rate schedule, and the epoch/batch
//! training loop (including ADAM pretraining followed by SPSA fine-tuning).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::born::{shift_rule, BornModel};
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::metrics::{dot, mmd_gradient_cached, total_variance, GramCache, KernelConfig};
use crate::noise::{apply_cnot_depolarizing, apply_readout_noise, mitigate_readout};
use crate::noise::{ConfusionMatrix, NoiseConfig};
use crate::sim::sample_with_rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First and second moment accumulators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected ADAM update (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
pub fn adam_step(theta: &[f64], gradient: &[f64], state: &AdamState, lr: f64) -> Result<(Vec<f64>, AdamState)> {
    if theta.len() != gradient.len() {
        return Err(Error::DimensionMismatch { left: theta.len(), right: gradient.len() });
    }
    let mut next = if state.m.is_empty() && state.t == 0 { AdamState::new(theta.len()) } else { state.clone() };
    if next.m.len() != theta.len() {
        return Err(Error::DimensionMismatch { left: next.m.len(), right: theta.len() });
    }
    next.t += 1;
    let t = next.t as i32;
    let c1 = 1.0 - libm::pow(BETA1, t as f64);
    let c2 = 1.0 - libm::pow(BETA2, t as f64);
    let updated = theta
        .iter()
        .zip(gradient)
        .zip(next.m.iter_mut().zip(next.v.iter_mut()))
        .map(|((&x, &g), (m, v))| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            x - lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS)
        })
        .collect();
    Ok((updated, next))
}

/// SPSA gain sequences `a_k = a/(k+1)^α`, `c_k = c/(k+1)^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaSettings {
    pub a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for SpsaSettings {
    fn default() -> Self {
        Self { a: 0.2, c: 0.1, alpha: 0.602, gamma: 0.101 }
    }
}

impl SpsaSettings {
    pub fn gains(&self, iteration: usize) -> (f64, f64) {
        let k = (iteration + 1) as f64;
        (self.a / libm::pow(k, self.alpha), self.c / libm::pow(k, self.gamma))
    }
}

/// One SPSA update from exactly two loss evaluations at `θ ± c_k Δ`, with
/// Rademacher `Δ`.
pub fn spsa_step<F, R>(
    theta: &[f64],
    mut loss_fn: F,
    iteration: usize,
    settings: &SpsaSettings,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    let (a_k, c_k) = settings.gains(iteration);
    let delta: Vec<f64> = theta.iter().map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let probe = |sign: f64| -> Vec<f64> {
        theta.iter().zip(&delta).map(|(t, d)| t + sign * c_k * d).collect()
    };
    let up = loss_fn(&probe(1.0))?;
    let down = loss_fn(&probe(-1.0))?;
    let slope = (up - down) / (2.0 * c_k);
    // Δ_i = ±1, so dividing by Δ_i is multiplying by it.
    Ok(theta.iter().zip(&delta).map(|(t, d)| t - a_k * slope * d).collect())
}

/// `initial · 2^(−⌊epoch / period⌋)` for a zero-based epoch.
pub fn learning_rate(initial: f64, period: usize, epoch: usize) -> f64 {
    let halvings = epoch.checked_div(period).unwrap_or(0);
    initial / libm::pow(2.0, halvings as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Zeros,
    Uniform0To2Pi,
    /// Normal with standard deviation 0.1.
    SmallNormal,
}

pub fn init_parameters(n: usize, scheme: InitScheme, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match scheme {
        InitScheme::Zeros => vec![0.0; n],
        InitScheme::Uniform0To2Pi => {
            (0..n).map(|_| rng.gen_range(0.0..core::f64::consts::TAU)).collect()
        }
        InitScheme::SmallNormal => {
            let normal = Normal::new(0.0, 0.1).expect("valid std");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Spsa,
    /// ADAM for `max_epochs`, then SPSA for `spsa_epochs` from the best ADAM parameters.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Full probability vectors.
    Exact,
    /// Histograms of `batch_size` samples for the model and the target.
    Shots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub initial_lr: f64,
    pub lr_halving_period: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// SPSA epochs of the mixed scheme (SPSA-only runs use `max_epochs`).
    pub spsa_epochs: usize,
    pub seed: u64,
    pub spsa: SpsaSettings,
    pub kernel: KernelConfig,
    pub noise: Option<NoiseConfig>,
    /// Invert the readout channel of `noise` on every model evaluation.
    pub mitigate_readout: bool,
    pub sampling: Sampling,
    /// Conditions excluded from training, e.g. an interpolation test energy.
    pub held_out_conditions: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            initial_lr: 0.01,
            lr_halving_period: 20,
            batches_per_epoch: 10,
            batch_size: 512,
            max_epochs: 70,
            spsa_epochs: 10,
            seed: 0,
            spsa: SpsaSettings::default(),
            kernel: KernelConfig::default(),
            noise: None,
            mitigate_readout: false,
            sampling: Sampling::Exact,
            held_out_conditions: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        if self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config("batch counts must be at least 1".into()));
        }
        if self.spsa.a <= 0.0 || self.spsa.c <= 0.0 {
            return Err(Error::Config("SPSA gains must be positive".into()));
        }
        self.kernel.validate()?;
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }
}

/// Train/validation distributions for one condition value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedTarget {
    pub condition: Option<f64>,
    pub train: DiscreteDistribution,
    pub validation: DiscreteDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTarget {
    pub items: Vec<ConditionedTarget>,
}

impl TrainingTarget {
    pub fn single(train: DiscreteDistribution, validation: DiscreteDistribution) -> Self {
        Self { items: vec![ConditionedTarget { condition: None, train, validation }] }
    }

    pub fn conditional(items: Vec<ConditionedTarget>) -> Self {
        Self { items }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adam,
    Spsa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Zero-based epoch within the whole run.
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation MMD of a `batch_size`-shot model histogram (shot mode only).
    #[serde(default)]
    pub sampled_val_loss: Option<f64>,
    pub tv: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Validation metrics of the starting parameters.
    pub initial_val_loss: f64,
    pub initial_tv: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    /// Validation loss of the parameters handed from ADAM to SPSA, measured
    /// at the end of ADAM and again at the start of SPSA.
    pub handoff: Option<(f64, f64)>,
}

/// Model evaluation pipeline: exact circuit, optional depolarizing
/// trajectories and readout noise, optional shot sampling, optional mitigation.
struct Evaluator<'a> {
    model: &'a BornModel,
    noise: Option<&'a NoiseConfig>,
    mitigation: Option<ConfusionMatrix>,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a BornModel, config: &'a TrainConfig) -> Result<Self> {
        let noise = config.noise.as_ref();
        let mitigation = match (noise, config.mitigate_readout) {
            (Some(n), true) => {
                Some(ConfusionMatrix::from_readout(model.circuit().n_qubits(), n)?)
            }
            _ => None,
        };
        Ok(Self { model, noise, mitigation })
    }

    fn is_exact(&self) -> bool {
        self.noise.is_none()
    }

    fn distribution<R: Rng>(
        &self,
        theta: &[f64],
        condition: Option<f64>,
        shots: Option<usize>,
        rng: &mut R,
    ) -> Result<DiscreteDistribution> {
        let mut p = match self.noise {
            Some(noise) if noise.cnot_depol_prob > 0.0 => {
                let data = self.model.data_angles(condition)?;
                let p = apply_cnot_depolarizing(self.model.circuit(), theta, data.as_deref(), noise, rng)?;
                p.with_condition(condition)
            }
            _ => self.model.distribution_at(theta, condition)?,
        };
        if let Some(noise) = self.noise {
            p = apply_readout_noise(&p, noise)?;
        }
        if let Some(n) = shots {
            let idx = sample_with_rng(&p, n, rng);
            p = DiscreteDistribution::from_counts(&idx, p.register_bits().to_vec())?
                .with_condition(condition);
        }
        if let Some(m) = &self.mitigation {
            p = mitigate_readout(&p, m)?;
        }
        Ok(p)
    }
}

fn resample<R: Rng>(dist: &DiscreteDistribution, n: usize, rng: &mut R) -> Result<DiscreteDistribution> {
    let idx = sample_with_rng(dist, n, rng);
    Ok(DiscreteDistribution::from_counts(&idx, dist.register_bits().to_vec())?.with_condition(dist.condition()))
}

struct Trainer<'a> {
    model: BornModel,
    items: Vec<&'a ConditionedTarget>,
    config: &'a TrainConfig,
    gram: GramCache,
    rng: ChaCha8Rng,
    /// Separate stream so that sampled validation leaves training draws unchanged.
    val_rng: ChaCha8Rng,
    clock: &'a dyn Fn() -> f64,
    start: f64,
}

impl<'a> Trainer<'a> {
    fn shots(&self) -> Option<usize> {
        match self.config.sampling {
            Sampling::Exact => None,
            Sampling::Shots => Some(self.config.batch_size),
        }
    }

    fn batch_target(&mut self, item: &ConditionedTarget) -> Result<DiscreteDistribution> {
        match self.config.sampling {
            Sampling::Exact => Ok(item.train.clone()),
            Sampling::Shots => resample(&item.train, self.config.batch_size, &mut self.rng),
        }
    }

    /// Loss and parameter-shift gradient at the model's current parameters.
    fn loss_and_gradient(&mut self, target: &DiscreteDistribution, condition: Option<f64>) -> Result<(f64, Vec<f64>)> {
        let eval = Evaluator::new(&self.model, self.config)?;
        if eval.is_exact() && self.shots().is_none() {
            let p = self.model.model_distribution(condition)?;
            let loss = self.gram.mmd(&p, target)?;
            let grad = mmd_gradient_cached(&self.model, target, &self.gram, condition)?;
            return Ok((loss, grad));
        }
        let shots = self.shots();
        let theta = self.model.theta().to_vec();
        let p = eval.distribution(&theta, condition, shots, &mut self.rng)?;
        let loss = self.gram.mmd(&p, target)?;
        let diff: Vec<f64> = p.probs().iter().zip(target.probs()).map(|(a, b)| a - b).collect();
        let residual = self.gram.apply(&diff);
        let mut grad = Vec::with_capacity(theta.len());
        let mut shifted = theta.clone();
        for i in 0..theta.len() {
            let kind = self.model.circuit().slot_kind(i).expect("slot in range");
            let (shift, scale) = shift_rule(kind);
            shifted[i] = theta[i] + shift;
            let plus = eval.distribution(&shifted, condition, shots, &mut self.rng)?;
            shifted[i] = theta[i] - shift;
            let minus = eval.distribution(&shifted, condition, shots, &mut self.rng)?;
            shifted[i] = theta[i];
            let delta: Vec<f64> = plus.probs().iter().zip(minus.probs()).map(|(a, b)| a - b).collect();
            grad.push(2.0 * scale * dot(&delta, &residual));
        }
        Ok((loss, grad))
    }

    fn noisy_loss(&mut self, theta: &[f64], target: &DiscreteDistribution, condition: Option<f64>) -> Result<f64> {
        let shots = self.shots();
        let eval = Evaluator::new(&self.model, self.config)?;
        let p = eval.distribution(theta, condition, shots, &mut self.rng)?;
        self.gram.mmd(&p, target)
    }

    /// Mean validation MMD and TV over the training conditions. In shot mode
    /// the MMD of a sampled model histogram is returned as well.
    fn validate(&mut self) -> Result<(f64, f64, Option<f64>)> {
        let theta = self.model.theta().to_vec();
        let (mut loss, mut tv, mut sampled) = (0.0, 0.0, 0.0);
        let items = self.items.clone();
        for item in &items {
            let eval = Evaluator::new(&self.model, self.config)?;
            let p = eval.distribution(&theta, item.condition, None, &mut self.rng)?;
            loss += self.gram.mmd(&p, &item.validation)?;
            tv += total_variance(&p, &item.validation)?;
            if let Some(n) = self.shots() {
                let hist = resample(&p, n, &mut self.val_rng)?;
                sampled += self.gram.mmd(&hist, &item.validation)?;
            }
        }
        let n = items.len() as f64;
        Ok((loss / n, tv / n, self.shots().map(|_| sampled / n)))
    }

    fn run_epochs(
        &mut self,
        phase: Phase,
        first_epoch: usize,
        n_epochs: usize,
        trace: &mut TrainTrace,
        best: &mut (f64, Vec<f64>),
    ) -> Result<()> {
        let mut adam = AdamState::new(self.model.n_parameters());
        let mut spsa_iter = 0usize;
        for e in 0..n_epochs {
            let epoch = first_epoch + e;
            let lr = learning_rate(self.config.initial_lr, self.config.lr_halving_period, e);
            let mut loss_sum = 0.0;
            let mut grad_sum = 0.0;
            let mut steps = 0usize;
            let mut last_lr = lr;
            let items = self.items.clone();
            for item in &items {
                for batch in 0..self.config.batches_per_epoch {
                    let target = self.batch_target(item)?;
                    let loss = match phase {
                        Phase::Adam => {
                            let (loss, grad) = self.loss_and_gradient(&target, item.condition)?;
                            let (theta, next) = adam_step(self.model.theta(), &grad, &adam, lr)?;
                            adam = next;
                            grad_sum += libm::sqrt(dot(&grad, &grad));
                            self.model.set_theta(theta)?;
                            loss
                        }
                        Phase::Spsa => {
                            let theta = self.model.theta().to_vec();
                            let settings = self.config.spsa;
                            let mut rng = ChaCha8Rng::seed_from_u64(self.rng.gen());
                            let mut evaluated = 0.0;
                            let next = spsa_step(
                                &theta,
                                |t| {
                                    let l = self.noisy_loss(t, &target, item.condition)?;
                                    evaluated += 0.5 * l;
                                    Ok(l)
                                },
                                spsa_iter,
                                &settings,
                                &mut rng,
                            )?;
                            last_lr = settings.gains(spsa_iter).0;
                            spsa_iter += 1;
                            self.model.set_theta(next)?;
                            evaluated
                        }
                    };
                    if !loss.is_finite() || self.model.theta().iter().any(|t| !t.is_finite()) {
                        return Err(Error::NanLoss { epoch, batch });
                    }
                    loss_sum += loss;
                    steps += 1;
                }
            }
            let (val_loss, tv, sampled_val_loss) = self.validate()?;
            if !val_loss.is_finite() {
                return Err(Error::NanLoss { epoch, batch: self.config.batches_per_epoch });
            }
            if val_loss < best.0 {
                *best = (val_loss, self.model.theta().to_vec());
                trace.best_epoch = Some(epoch);
                trace.best_val_loss = val_loss;
            }
            trace.epochs.push(EpochRecord {
                epoch,
                phase,
                train_loss: loss_sum / steps as f64,
                val_loss,
                sampled_val_loss,
                tv,
                lr: last_lr,
                grad_norm: grad_sum / steps as f64,
                seconds: (self.clock)() - self.start,
            });
        }
        Ok(())
    }
}

/// Trains `model` against `target`; returns the best-validation parameters.
pub fn train(model: &BornModel, target: &TrainingTarget, config: &TrainConfig) -> Result<(BornModel, TrainTrace)> {
    train_with_clock(model, target, config, &|| 0.0)
}

/// As [`train`], stamping each epoch with `clock()` (seconds).
pub fn train_with_clock(
    model: &BornModel,
    target: &TrainingTarget,
    config: &TrainConfig,
    clock: &dyn Fn() -> f64,
) -> Result<(BornModel, TrainTrace)> {
    config.validate()?;
    let held_out = |c: Option<f64>| {
        c.is_some_and(|c| config.held_out_conditions.iter().any(|h| (h - c).abs() < 1e-9))
    };
    let mut items: Vec<&ConditionedTarget> = target.items.iter().filter(|i| !held_out(i.condition)).collect();
    if items.is_empty() {
        return Err(Error::Empty("training conditions"));
    }
    items.sort_by(|a, b| a.condition.partial_cmp(&b.condition).unwrap_or(core::cmp::Ordering::Equal));
    let bits = model.register_bits();
    for item in &items {
        if item.train.register_bits() != bits.as_slice() || item.validation.register_bits() != bits.as_slice() {
            return Err(Error::BinSetMismatch);
        }
    }
    let gram = GramCache::new(&bits, &config.kernel)?;
    let mut trainer = Trainer {
        model: model.clone(),
        items,
        config,
        gram,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        val_rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5641_4c49_4441_5445),
        clock,
        start: clock(),
    };
    let (initial_val_loss, initial_tv, _) = trainer.validate()?;
    let mut trace = TrainTrace {
        initial_val_loss,
        initial_tv,
        best_val_loss: initial_val_loss,
        ..TrainTrace::default()
    };
    let mut best = (initial_val_loss, model.theta().to_vec());
    match config.optimizer {
        OptimizerKind::Adam => {
            trainer.run_epochs(Phase::Adam, 0, config.max_epochs, &mut trace, &mut best)?;
        }
        OptimizerKind::Spsa => {
            trainer.run_epochs(Phase::Spsa, 0, config.max_epochs, &mut trace, &mut best)?;
        }
        OptimizerKind::Mixed => {
            trainer.run_epochs(Phase::Adam, 0, config.max_epochs, &mut trace, &mut best)?;
            let adam_best = best.0;
            trainer.model.set_theta(best.1.clone())?;
            let (restart, ..) = trainer.validate()?;
            trace.handoff = Some((adam_best, restart));
            trainer.run_epochs(Phase::Spsa, config.max_epochs, config.spsa_epochs, &mut trace, &mut best)?;
        }
    }
    let mut out = model.clone();
    out.set_theta(best.1)?;
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::build_hardware_efficient;

    #[test]
    fn adam_zero_gradient_keeps_theta() {
        let (t, _) = adam_step(&[0.3, -1.0], &[0.0, 0.0], &AdamState::default(), 0.01).unwrap();
        assert_eq!(t, vec![0.3, -1.0]);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let g = [0.5, -2.0, 1e-3];
        let (t, s) = adam_step(&[0.0; 3], &g, &AdamState::new(3), 0.01).unwrap();
        for (x, gi) in t.iter().zip(g) {
            // m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε).
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-15);
            assert!((x.abs() - 0.01).abs() < 1e-7);
        }
        assert_eq!(s.t, 1);
        let again = adam_step(&[0.0; 3], &g, &AdamState::new(3), 0.01).unwrap();
        assert_eq!(again.0, t);
        assert!(adam_step(&[0.0; 2], &g, &AdamState::new(3), 0.01).is_err());
    }

    #[test]
    fn schedule_halves() {
        assert_eq!(learning_rate(0.01, 20, 0), 0.01);
        assert_eq!(learning_rate(0.01, 20, 19), 0.01);
        assert_eq!(learning_rate(0.01, 20, 20), 0.005);
        assert_eq!(learning_rate(0.01, 20, 45), 0.0025);
    }

    #[test]
    fn spsa_constant_loss_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut calls = 0;
        let t = spsa_step(&[0.1, 0.2], |_| { calls += 1; Ok(3.0) }, 0, &SpsaSettings::default(), &mut rng).unwrap();
        assert_eq!(t, vec![0.1, 0.2]);
        assert_eq!(calls, 2);
    }

    #[test]
    fn spsa_minimizes_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let start = libm::sqrt(dot(&theta, &theta));
        let settings = SpsaSettings::default();
        let run = |mut theta: Vec<f64>, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 0..500 {
                theta = spsa_step(&theta, |t| Ok(dot(t, t)), k, &settings, &mut rng).unwrap();
            }
            theta
        };
        let a = run(theta.clone(), 5);
        assert_eq!(a, run(theta.clone(), 5));
        theta = a;
        assert!(libm::sqrt(dot(&theta, &theta)) * 10.0 <= start);
    }

    #[test]
    fn init_schemes() {
        assert_eq!(init_parameters(4, InitScheme::Zeros, 1), vec![0.0; 4]);
        let u = init_parameters(1000, InitScheme::Uniform0To2Pi, 3);
        let mean = u.iter().sum::<f64>() / 1000.0;
        assert!((mean - core::f64::consts::PI).abs() < 0.2);
        assert!(u.iter().all(|x| (0.0..core::f64::consts::TAU).contains(x)));
        assert_eq!(init_parameters(9, InitScheme::SmallNormal, 4), init_parameters(9, InitScheme::SmallNormal, 4));
        let n = init_parameters(2000, InitScheme::SmallNormal, 4);
        let var = n.iter().map(|x| x * x).sum::<f64>() / 2000.0;
        assert!((libm::sqrt(var) - 0.1).abs() < 0.01);
    }

    fn one_qubit_target() -> TrainingTarget {
        let t = DiscreteDistribution::one_dim(vec![0.25, 0.75]).unwrap();
        TrainingTarget::single(t.clone(), t)
    }

    #[test]
    fn one_qubit_training_converges() {
        let c = build_hardware_efficient(1, 0, false).unwrap();
        let m = BornModel::with_default_features(c, vec![0.1]).unwrap();
        let cfg = TrainConfig { max_epochs: 50, ..TrainConfig::default() };
        let (trained, trace) = train(&m, &one_qubit_target(), &cfg).unwrap();
        assert_eq!(trace.epochs.len(), 50);
        assert!(trace.epochs.last().unwrap().tv <= 0.01);
        // p(1) = sin²(θ/2) = 0.75 at θ = 2π/3.
        assert!((trained.theta()[0] - 2.0 * core::f64::consts::FRAC_PI_3).abs() < 0.05);
        assert_eq!(trace.epochs[20].lr, 0.005);
        assert!(trace.epochs.iter().all(|e| e.sampled_val_loss.is_none()));
    }

    #[test]
    fn training_is_deterministic_and_mixed_hands_off() {
        let c = build_hardware_efficient(2, 1, true).unwrap();
        let n = c.n_parameters();
        let m = BornModel::with_default_features(c, init_parameters(n, InitScheme::SmallNormal, 2)).unwrap();
        let t = DiscreteDistribution::one_dim(vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let target = TrainingTarget::single(t.clone(), t);
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Mixed,
            max_epochs: 5,
            spsa_epochs: 3,
            sampling: Sampling::Shots,
            ..TrainConfig::default()
        };
        let a = train(&m, &target, &cfg).unwrap();
        let b = train(&m, &target, &cfg).unwrap();
        assert_eq!(a, b);
        let (adam_best, restart) = a.1.handoff.unwrap();
        assert_eq!(adam_best, restart);
        assert_eq!(a.1.epochs.len(), 8);
        assert_eq!(a.1.epochs[5].phase, Phase::Spsa);
        assert!(a.1.epochs.iter().all(|e| e.sampled_val_loss.is_some_and(|v| v >= 0.0)));
    }

    #[test]
    fn conditional_training_skips_held_out() {
        let c = crate::circuits::build_conditional(1, 1).unwrap();
        let m = BornModel::with_default_features(c, vec![0.0; 3])
            .unwrap()
            .with_condition_encoder(crate::born::ConditionEncoder { e_min: 0.0, e_max: 1.0 })
            .unwrap();
        let item = |c: f64, p: f64| {
            let d = DiscreteDistribution::one_dim(vec![1.0 - p, p]).unwrap().with_condition(Some(c));
            ConditionedTarget { condition: Some(c), train: d.clone(), validation: d }
        };
        let target = TrainingTarget::conditional(vec![item(1.0, 0.9), item(0.0, 0.1), item(0.5, 0.5)]);
        let cfg = TrainConfig { max_epochs: 2, held_out_conditions: vec![0.5], ..TrainConfig::default() };
        let (_, trace) = train(&m, &target, &cfg).unwrap();
        assert_eq!(trace.epochs.len(), 2);
        let all_out = TrainConfig { held_out_conditions: vec![0.0, 0.5, 1.0], ..cfg };
        assert_eq!(train(&m, &target, &all_out).unwrap_err(), Error::Empty("training conditions"));
    }
}
