//! Classical baseline: a fully connected generator mapping Gaussian latent
//! noise to continuous feature vectors, trained on the sample MMD with
//! backpropagated gradients and ADAM.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::KernelConfig;
use crate::optimize::{adam_step, learning_rate, AdamState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(latent_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = Self { latent_dim, hidden, output_dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("layer sizes must be at least 1: {self:?}")));
        }
        Ok(())
    }

    /// Widths from the latent input to the output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.latent_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn n_parameters(&self) -> usize {
        self.widths().windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }
}

/// Flat parameters: per layer the `out × in` weight matrix (row-major) then the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

struct LayerView {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Mlp {
    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.n_parameters() {
            return Err(Error::ParameterCount { expected: spec.n_parameters(), actual: params.len() });
        }
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        let n = spec.n_parameters();
        Self::from_params(spec, vec![0.0; n])
    }

    /// Weights uniform in `±√(6/(fan_in + fan_out))`, zero biases.
    pub fn glorot(spec: MlpSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in net.layers() {
            let limit = libm::sqrt(6.0 / (l.fan_in + l.fan_out) as f64);
            for w in &mut net.params[l.offset..l.offset + l.fan_in * l.fan_out] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    fn layers(&self) -> Vec<LayerView> {
        let mut offset = 0;
        self.spec
            .widths()
            .windows(2)
            .map(|p| {
                let l = LayerView { fan_in: p[0], fan_out: p[1], offset };
                offset += p[1] * (p[0] + 1);
                l
            })
            .collect()
    }

    /// Activations of every layer for a row-major `batch × latent_dim` input.
    fn forward_cached(&self, latents: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut acts = vec![latents.to_vec()];
        for (li, l) in layers.iter().enumerate() {
            let w = &self.params[l.offset..l.offset + l.fan_in * l.fan_out];
            let b = &self.params[l.offset + l.fan_in * l.fan_out..l.offset + l.fan_out * (l.fan_in + 1)];
            let input = &acts[li];
            let mut out = vec![0.0; batch * l.fan_out];
            for r in 0..batch {
                let x = &input[r * l.fan_in..(r + 1) * l.fan_in];
                let y = &mut out[r * l.fan_out..(r + 1) * l.fan_out];
                for (o, yo) in y.iter_mut().enumerate() {
                    let row = &w[o * l.fan_in..(o + 1) * l.fan_in];
                    let h = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                    *yo = if li == last { h } else { sigmoid(h) };
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Maps each latent row to an output row.
    pub fn forward(&self, latents: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.spec.latent_dim;
        if let Some(bad) = latents.iter().find(|z| z.len() != d) {
            return Err(Error::DimensionMismatch { left: bad.len(), right: d });
        }
        let flat: Vec<f64> = latents.iter().flatten().copied().collect();
        let out = self.forward_cached(&flat, latents.len()).pop().unwrap_or_default();
        Ok(out.chunks(self.spec.output_dim).map(<[f64]>::to_vec).collect())
    }

    /// Parameter gradient given `∂L/∂output` for each row, by backpropagation.
    fn backward(&self, acts: &[Vec<f64>], out_grad: &[f64], batch: usize) -> Vec<f64> {
        let layers = self.layers();
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = out_grad.to_vec();
        for li in (0..layers.len()).rev() {
            let l = &layers[li];
            let input = &acts[li];
            let wlen = l.fan_in * l.fan_out;
            for r in 0..batch {
                let x = &input[r * l.fan_in..(r + 1) * l.fan_in];
                let d = &delta[r * l.fan_out..(r + 1) * l.fan_out];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let g = &mut grad[l.offset + o * l.fan_in..l.offset + (o + 1) * l.fan_in];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += dv * xi;
                    }
                    grad[l.offset + wlen + o] += dv;
                }
            }
            if li == 0 {
                break;
            }
            let w = &self.params[l.offset..l.offset + wlen];
            let mut prev = vec![0.0; batch * l.fan_in];
            for r in 0..batch {
                let d = &delta[r * l.fan_out..(r + 1) * l.fan_out];
                let p = &mut prev[r * l.fan_in..(r + 1) * l.fan_in];
                for (o, &dv) in d.iter().enumerate() {
                    for (pi, wi) in p.iter_mut().zip(&w[o * l.fan_in..(o + 1) * l.fan_in]) {
                        *pi += dv * wi;
                    }
                }
                // Inputs of layer li are sigmoid outputs a; σ' = a(1 − a).
                for (pi, a) in p.iter_mut().zip(&input[r * l.fan_in..(r + 1) * l.fan_in]) {
                    *pi *= a * (1.0 - a);
                }
            }
            delta = prev;
        }
        grad
    }

    /// `n` samples from standard-normal latents.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample_inner(n, None, seed)
    }

    /// `n` samples of a conditional generator (see [`train_conditional_gmmd`]).
    pub fn sample_conditional(&self, n: usize, condition: f64, seed: u64) -> Vec<Vec<f64>> {
        self.sample_inner(n, Some(condition), seed)
    }

    fn sample_inner(&self, n: usize, condition: Option<f64>, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = latent_batch(&mut rng, n, self.spec.latent_dim);
        if let Some(c) = condition {
            set_condition(&mut z, self.spec.latent_dim, c);
        }
        let out = self.forward_cached(&z, n).pop().unwrap_or_default();
        out.chunks(self.spec.output_dim).map(<[f64]>::to_vec).collect()
    }
}

fn latent_batch<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// V-statistic MMD between row-major sample sets `xs` (`n × d`) and `ys`
/// (`m × d`), and its gradient with respect to every entry of `xs`.
pub fn sample_mmd_with_gradient(xs: &[f64], ys: &[f64], dim: usize, config: &KernelConfig) -> (f64, Vec<f64>) {
    let n = xs.len() / dim;
    let m = ys.len() / dim;
    let inv_two_sigma: Vec<f64> = config.bandwidths.iter().map(|s| 0.5 / s).collect();
    // Returns k(d²) and dk/d(d²).
    let k = |a: &[f64], b: &[f64]| -> (f64, f64) {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        inv_two_sigma.iter().fold((0.0, 0.0), |(v, dv), c| {
            let e = libm::exp(-d2 * c);
            (v + e, dv - c * e)
        })
    };
    let mut grad = vec![0.0; xs.len()];
    let self_kernel = config.bandwidths.len() as f64;
    // Diagonal pairs contribute k(0) and no gradient; off-diagonal pairs are
    // visited once and counted twice.
    let (mut kxx, mut kxy, mut kyy) = (n as f64 * self_kernel, 0.0, m as f64 * self_kernel);
    let wxx = 1.0 / (n * n) as f64;
    let wxy = 1.0 / (n * m) as f64;
    for i in 0..n {
        let xi = &xs[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let xj = &xs[j * dim..(j + 1) * dim];
            let (v, dv) = k(xi, xj);
            kxx += 2.0 * v;
            let s = 4.0 * wxx * dv;
            for c in 0..dim {
                let g = s * (xi[c] - xj[c]);
                grad[i * dim + c] += g;
                grad[j * dim + c] -= g;
            }
        }
        for j in 0..m {
            let yj = &ys[j * dim..(j + 1) * dim];
            let (v, dv) = k(xi, yj);
            kxy += v;
            let s = -4.0 * wxy * dv;
            for c in 0..dim {
                grad[i * dim + c] += s * (xi[c] - yj[c]);
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            kyy += 2.0 * k(&ys[i * dim..(i + 1) * dim], &ys[j * dim..(j + 1) * dim]).0;
        }
    }
    let loss = kxx * wxx - 2.0 * kxy * wxy + kyy / (m * m) as f64;
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmdConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_halving_period: usize,
    pub kernel: KernelConfig,
    pub seed: u64,
}

impl Default for GmmdConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batches_per_epoch: 10,
            batch_size: 512,
            initial_lr: 0.003,
            lr_halving_period: 40,
            kernel: KernelConfig::default(),
            seed: 0,
        }
    }
}

impl GmmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs, batches and batch size must be positive".into()));
        }
        if !(self.initial_lr > 0.0) || self.lr_halving_period == 0 {
            return Err(Error::Config("learning rate and halving period must be positive".into()));
        }
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmdEpoch {
    pub epoch: usize,
    /// Mean batch MMD over the epoch.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GmmdTrace {
    pub epochs: Vec<GmmdEpoch>,
}

/// Trains a Glorot-initialized generator on `data` (rows of continuous features).
pub fn train_gmmd(spec: &MlpSpec, data: &[Vec<f64>], config: &GmmdConfig) -> Result<(Mlp, GmmdTrace)> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    train_groups(spec, &[(None, data)], config)
}

/// Training rows observed at one value of the (encoded) condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionGroup {
    pub condition: f64,
    pub data: Vec<Vec<f64>>,
}

/// Conditional generator: the last of the `latent_dim` inputs carries the
/// condition value instead of noise. Every epoch runs `batches_per_epoch`
/// steps per group, each matching generated and data batches of that group.
pub fn train_conditional_gmmd(
    spec: &MlpSpec,
    groups: &[ConditionGroup],
    config: &GmmdConfig,
) -> Result<(Mlp, GmmdTrace)> {
    if spec.latent_dim < 2 {
        return Err(Error::Config("a conditional generator needs noise inputs besides the condition".into()));
    }
    if groups.is_empty() || groups.iter().any(|g| g.data.is_empty()) {
        return Err(Error::Empty("training data"));
    }
    let views: Vec<(Option<f64>, &[Vec<f64>])> = groups.iter().map(|g| (Some(g.condition), g.data.as_slice())).collect();
    train_groups(spec, &views, config)
}

fn train_groups(spec: &MlpSpec, groups: &[(Option<f64>, &[Vec<f64>])], config: &GmmdConfig) -> Result<(Mlp, GmmdTrace)> {
    config.validate()?;
    for (_, data) in groups {
        if let Some(bad) = data.iter().find(|r| r.len() != spec.output_dim) {
            return Err(Error::DimensionMismatch { left: bad.len(), right: spec.output_dim });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Mlp::glorot(spec.clone(), rng.gen())?;
    let mut adam = AdamState::new(net.params.len());
    let mut trace = GmmdTrace::default();
    let dim = spec.output_dim;
    let b = config.batch_size;
    let mut ys = vec![0.0; b * dim];
    let steps = (config.batches_per_epoch * groups.len()) as f64;
    for epoch in 0..config.epochs {
        let lr = learning_rate(config.initial_lr, config.lr_halving_period, epoch);
        let mut total = 0.0;
        for (condition, data) in groups {
            for batch in 0..config.batches_per_epoch {
                for r in 0..b {
                    let row = &data[rng.gen_range(0..data.len())];
                    ys[r * dim..(r + 1) * dim].copy_from_slice(row);
                }
                let mut z = latent_batch(&mut rng, b, spec.latent_dim);
                if let Some(c) = condition {
                    set_condition(&mut z, spec.latent_dim, *c);
                }
                let acts = net.forward_cached(&z, b);
                let (loss, out_grad) = sample_mmd_with_gradient(&acts[acts.len() - 1], &ys, dim, &config.kernel);
                if !loss.is_finite() {
                    return Err(Error::NanLoss { epoch, batch });
                }
                total += loss;
                let grad = net.backward(&acts, &out_grad, b);
                let (next, state) = adam_step(&net.params, &grad, &adam, lr)?;
                net.params = next;
                adam = state;
            }
        }
        trace.epochs.push(GmmdEpoch { epoch, loss: total / steps, lr });
    }
    Ok((net, trace))
}

fn set_condition(latents: &mut [f64], dim: usize, condition: f64) {
    for row in latents.chunks_mut(dim) {
        row[dim - 1] = condition;
    }
}

/// Loss of `net` on fixed latents and data, and its backpropagated parameter gradient.
pub fn gmmd_loss_and_gradient(
    net: &Mlp,
    latents: &[Vec<f64>],
    data: &[Vec<f64>],
    kernel: &KernelConfig,
) -> Result<(f64, Vec<f64>)> {
    let d = net.spec.latent_dim;
    if let Some(bad) = latents.iter().find(|z| z.len() != d) {
        return Err(Error::DimensionMismatch { left: bad.len(), right: d });
    }
    if let Some(bad) = data.iter().find(|r| r.len() != net.spec.output_dim) {
        return Err(Error::DimensionMismatch { left: bad.len(), right: net.spec.output_dim });
    }
    if latents.is_empty() || data.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let z: Vec<f64> = latents.iter().flatten().copied().collect();
    let ys: Vec<f64> = data.iter().flatten().copied().collect();
    let acts = net.forward_cached(&z, latents.len());
    let (loss, out_grad) = sample_mmd_with_gradient(&acts[acts.len() - 1], &ys, net.spec.output_dim, kernel);
    Ok((loss, net.backward(&acts, &out_grad, latents.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::sample_mmd;

    #[test]
    fn spec_validation_and_counts() {
        assert!(MlpSpec::new(0, vec![4], 1).is_err());
        assert!(MlpSpec::new(2, vec![4, 0], 1).is_err());
        let s = MlpSpec::new(15, vec![64, 128, 64, 16], 1).unwrap();
        assert_eq!(s.n_parameters(), 16 * 64 + 65 * 128 + 129 * 64 + 65 * 16 + 17);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(MlpSpec::new(3, vec![5, 4], 2).unwrap()).unwrap();
        let out = net.forward(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        assert_eq!(out, vec![vec![0.0, 0.0]; 2]);
        assert!(net.forward(&[vec![1.0]]).is_err());
    }

    #[test]
    fn scalar_network_by_hand() {
        // 1-1-1: params are [w, b, v, c].
        let (w, b, v, c) = (0.7, -0.2, 1.5, 0.3);
        let net = Mlp::from_params(MlpSpec::new(1, vec![1], 1).unwrap(), vec![w, b, v, c]).unwrap();
        let xs = [-1.0, 0.0, 2.0];
        let out = net.forward(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        for (x, y) in xs.iter().zip(out) {
            let expected = 1.0 / (1.0 + (-(w * x + b)).exp()) * v + c;
            assert!((y[0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn glorot_bounds() {
        let spec = MlpSpec::new(4, vec![6], 2).unwrap();
        let net = Mlp::glorot(spec, 1).unwrap();
        let lim1 = (6.0f64 / 10.0).sqrt();
        assert!(net.params[..24].iter().all(|w| w.abs() <= lim1));
        assert!(net.params[24..30].iter().all(|&b| b == 0.0));
        assert_eq!(net, Mlp::glorot(MlpSpec::new(4, vec![6], 2).unwrap(), 1).unwrap());
    }

    #[test]
    fn mmd_with_gradient_matches_metric_and_fd() {
        let xs = [0.1, 0.4, -0.3, 1.2, 0.8, 0.0];
        let ys = [0.2, 0.1, 0.9, -0.5];
        let cfg = KernelConfig::default();
        let (loss, grad) = sample_mmd_with_gradient(&xs, &ys, 2, &cfg);
        let rows = |v: &[f64]| v.chunks(2).map(<[f64]>::to_vec).collect::<Vec<_>>();
        assert!((loss - sample_mmd(&rows(&xs), &rows(&ys), &cfg).unwrap()).abs() < 1e-12);
        let h = 1e-6;
        for i in 0..xs.len() {
            let mut p = xs;
            p[i] += h;
            let mut m = xs;
            m[i] -= h;
            let fd = (sample_mmd_with_gradient(&p, &ys, 2, &cfg).0 - sample_mmd_with_gradient(&m, &ys, 2, &cfg).0)
                / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let spec = MlpSpec::new(2, vec![2], 1).unwrap();
        let net = Mlp::glorot(spec, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let latents: Vec<Vec<f64>> = (0..8).map(|_| latent_batch(&mut rng, 1, 2)).collect();
        let data: Vec<Vec<f64>> = (0..6).map(|i| vec![0.3 * i as f64 - 0.5]).collect();
        let cfg = KernelConfig::new(vec![0.1, 1.0, 10.0]).unwrap();
        let (_, grad) = gmmd_loss_and_gradient(&net, &latents, &data, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..net.params.len() {
            let mut p = net.clone();
            p.params[i] += h;
            let mut m = net.clone();
            m.params[i] -= h;
            let fd = (gmmd_loss_and_gradient(&p, &latents, &data, &cfg).unwrap().0
                - gmmd_loss_and_gradient(&m, &latents, &data, &cfg).unwrap().0)
                / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-8);
            assert!(rel < 1e-4, "param {i}: fd {fd} backprop {}", grad[i]);
        }
    }

    #[test]
    fn learns_point_mass() {
        let spec = MlpSpec::new(2, vec![8], 1).unwrap();
        let data = vec![vec![0.7]; 64];
        let cfg = GmmdConfig { epochs: 200, batch_size: 64, initial_lr: 0.01, seed: 3, ..GmmdConfig::default() };
        let (net, trace) = train_gmmd(&spec, &data, &cfg).unwrap();
        assert_eq!(trace.epochs.len(), 200);
        let gen = net.sample(256, 11);
        let mmd = sample_mmd(&gen, &data, &cfg.kernel).unwrap();
        assert!(mmd <= 0.01, "mmd {mmd}");
    }

    #[test]
    fn conditional_generator_separates_groups() {
        let spec = MlpSpec::new(3, vec![8], 1).unwrap();
        let groups = vec![
            ConditionGroup { condition: 0.0, data: vec![vec![-1.0]; 32] },
            ConditionGroup { condition: 1.0, data: vec![vec![1.0]; 32] },
        ];
        let cfg = GmmdConfig { epochs: 150, batch_size: 32, initial_lr: 0.01, seed: 2, ..GmmdConfig::default() };
        let (net, trace) = train_conditional_gmmd(&spec, &groups, &cfg).unwrap();
        assert_eq!(trace.epochs.len(), 150);
        for g in &groups {
            let gen = net.sample_conditional(128, g.condition, 4);
            let mean = gen.iter().map(|r| r[0]).sum::<f64>() / gen.len() as f64;
            assert!((mean - g.data[0][0]).abs() < 0.25, "condition {}: mean {mean}", g.condition);
        }
        assert!(train_conditional_gmmd(&MlpSpec::new(1, vec![2], 1).unwrap(), &groups, &cfg).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let spec = MlpSpec::new(2, vec![4], 1).unwrap();
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 / 10.0).sin()]).collect();
        let cfg = GmmdConfig { epochs: 3, batch_size: 32, seed: 9, ..GmmdConfig::default() };
        let a = train_gmmd(&spec, &data, &cfg).unwrap();
        let b = train_gmmd(&spec, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(train_gmmd(&spec, &[], &cfg).is_err());
        assert!(train_gmmd(&spec, &[vec![1.0, 2.0]], &cfg).is_err());
    }
}
