//! MMD with a multi-bandwidth Gaussian kernel, its parameter-shift gradient,
//! total variance, and Pearson correlation.
//!
//! The kernel acts on bin coordinates: the bin index for one feature and the
//! tuple of bin indices (squared Euclidean distance) for several features.
//! [`KernelConfig::bin_coordinates`] replaces the indices by other per-bin
//! values, e.g. bin centers in feature units. Bandwidth terms are summed, so
//! `K(x, x)` equals the number of bandwidths.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::born::{shift_rule, BornModel};
use crate::dist::{split_index, DiscreteDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidths: Vec<f64>,
    /// Coordinate of every bin, one list per register; bin indices when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_coordinates: Option<Vec<Vec<f64>>>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { bandwidths: vec![0.01, 0.1, 1.0, 10.0, 100.0], bin_coordinates: None }
    }
}

impl KernelConfig {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        let config = Self { bandwidths, bin_coordinates: None };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::Config("kernel needs at least one bandwidth".into()));
        }
        if self.bandwidths.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("kernel bandwidths must be positive".into()));
        }
        if let Some(coords) = &self.bin_coordinates {
            if coords.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::Config("kernel bin coordinates must be finite".into()));
            }
        }
        Ok(())
    }

    /// Per-register coordinate of bin `b`.
    fn coordinate(&self, register: usize, b: usize) -> f64 {
        match &self.bin_coordinates {
            Some(c) => c[register][b],
            None => b as f64,
        }
    }

    fn check_layout(&self, register_bits: &[usize]) -> Result<()> {
        let Some(coords) = &self.bin_coordinates else { return Ok(()) };
        let fits = coords.len() == register_bits.len()
            && coords.iter().zip(register_bits).all(|(c, &bits)| c.len() == 1 << bits);
        if !fits {
            return Err(Error::Config("kernel bin coordinates do not match the register layout".into()));
        }
        Ok(())
    }

    /// `Σ_σ exp(−d²/(2σ))` for a squared distance `d²`.
    #[inline]
    pub fn eval_sq(&self, dist_sq: f64) -> f64 {
        self.bandwidths.iter().map(|s| libm::exp(-dist_sq / (2.0 * s))).sum()
    }
}

pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn kernel_value(x: &[f64], y: &[f64], config: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: y.len() });
    }
    Ok(config.eval_sq(squared_distance(x, y)))
}

/// Kernel matrix over every bin of a register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GramCache {
    register_bits: Vec<usize>,
    n: usize,
    matrix: Vec<f64>,
}

impl GramCache {
    pub fn new(register_bits: &[usize], config: &KernelConfig) -> Result<Self> {
        config.validate()?;
        config.check_layout(register_bits)?;
        let total: usize = register_bits.iter().sum();
        let n = 1usize << total;
        let coords: Vec<Vec<f64>> = (0..n)
            .map(|i| split_index(i, register_bits).into_iter().enumerate().map(|(r, b)| config.coordinate(r, b)).collect())
            .collect();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = config.eval_sq(squared_distance(&coords[i], &coords[j]));
                matrix[i * n + j] = k;
                matrix[j * n + i] = k;
            }
        }
        Ok(Self { register_bits: register_bits.to_vec(), n, matrix })
    }

    pub fn register_bits(&self) -> &[usize] {
        &self.register_bits
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    fn check(&self, p: &DiscreteDistribution) -> Result<()> {
        if p.register_bits() != self.register_bits.as_slice() {
            return Err(Error::BinSetMismatch);
        }
        Ok(())
    }

    /// `K·v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.chunks_exact(self.n).map(|row| dot(row, v)).collect()
    }

    /// `E_{x∼p, y∼q}[K(x, y)] = pᵀ K q`.
    pub fn expectation(&self, p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
        self.check(p)?;
        self.check(q)?;
        Ok(dot(p.probs(), &self.apply(q.probs())))
    }

    /// `(p − π)ᵀ K (p − π)`, floored at zero against round-off.
    pub fn mmd(&self, p: &DiscreteDistribution, target: &DiscreteDistribution) -> Result<f64> {
        self.check(p)?;
        self.check(target)?;
        let diff: Vec<f64> = p.probs().iter().zip(target.probs()).map(|(a, b)| a - b).collect();
        Ok(dot(&diff, &self.apply(&diff)).max(0.0))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `L = E_pp[K] − 2 E_pπ[K] + E_ππ[K]` over exact distributions.
pub fn mmd_loss(p: &DiscreteDistribution, target: &DiscreteDistribution, config: &KernelConfig) -> Result<f64> {
    p.check_same_bins(target)?;
    GramCache::new(p.register_bits(), config)?.mmd(p, target)
}

/// Parameter-shift gradient of the MMD loss.
///
/// For `RY`/`RX` slots this is the four-term expression
/// `E[K]_{p+,p} − E[K]_{p−,p} − E[K]_{p+,π} + E[K]_{p−,π}` with `θ± = θ ± π/2`.
pub fn mmd_gradient(
    model: &BornModel,
    target: &DiscreteDistribution,
    config: &KernelConfig,
    condition: Option<f64>,
) -> Result<Vec<f64>> {
    let gram = GramCache::new(target.register_bits(), config)?;
    mmd_gradient_cached(model, target, &gram, condition)
}

/// As [`mmd_gradient`], reusing a Gram matrix.
pub fn mmd_gradient_cached(
    model: &BornModel,
    target: &DiscreteDistribution,
    gram: &GramCache,
    condition: Option<f64>,
) -> Result<Vec<f64>> {
    let p = model.model_distribution(condition)?;
    p.check_same_bins(target)?;
    gram.check(target)?;
    let diff: Vec<f64> = p.probs().iter().zip(target.probs()).map(|(a, b)| a - b).collect();
    // K(p − π), shared by every component.
    let residual = gram.apply(&diff);
    gradient_components(model, |plus, minus| {
        plus.probs().iter().zip(minus.probs()).zip(&residual).map(|((a, b), r)| (a - b) * r).sum()
    }, condition)
}

/// Runs `term(p+, p−)` for every parameter and scales it into `∂L/∂θ_i`.
pub(crate) fn gradient_components<F>(model: &BornModel, term: F, condition: Option<f64>) -> Result<Vec<f64>>
where
    F: Fn(&DiscreteDistribution, &DiscreteDistribution) -> f64 + Sync,
{
    let component = |i: usize| -> Result<f64> {
        let kind = model.circuit().slot_kind(i).expect("slot in range");
        let (_, scale) = shift_rule(kind);
        let (plus, minus) = model.shifted_distributions(i, condition)?;
        Ok(2.0 * scale * term(&plus, &minus))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..model.n_parameters()).into_par_iter().map(component).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..model.n_parameters()).map(component).collect()
    }
}

/// `½ Σ |p(x) − π(x)|`.
pub fn total_variance(p: &DiscreteDistribution, target: &DiscreteDistribution) -> Result<f64> {
    p.check_same_bins(target)?;
    Ok(0.5 * p.probs().iter().zip(target.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Biased (V-statistic) MMD between two sample sets of equal dimension.
pub fn sample_mmd(xs: &[Vec<f64>], ys: &[Vec<f64>], config: &KernelConfig) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mean_k = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Result<f64> {
        let mut acc = 0.0;
        for x in a {
            for y in b {
                acc += kernel_value(x, y, config)?;
            }
        }
        Ok(acc / (a.len() * b.len()) as f64)
    };
    Ok(mean_k(xs, xs)? - 2.0 * mean_k(xs, ys)? + mean_k(ys, ys)?)
}

/// Pearson matrix `R_ij = C_ij / √(C_ii C_jj)` of row-major samples.
pub fn pearson_correlation(samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if samples.len() < 2 {
        return Err(Error::Empty("need at least two samples"));
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { left: bad.len(), right: d });
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / n;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in i..d {
                cov[i][j] += di * (s[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        if !(cov[i][i] > 0.0) {
            return Err(Error::ZeroVariance(i));
        }
    }
    let mut r = vec![vec![0.0; d]; d];
    for i in 0..d {
        r[i][i] = 1.0;
        for j in i + 1..d {
            let v = (cov[i][j] / libm::sqrt(cov[i][i] * cov[j][j])).clamp(-1.0, 1.0);
            r[i][j] = v;
            r[j][i] = v;
        }
    }
    Ok(r)
}
