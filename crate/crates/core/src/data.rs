//! Event preprocessing, binning, and a synthetic generator of correlated
//! muon events whose shape drifts with the incoming energy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::{join_index, DiscreteDistribution};
use crate::error::{Error, Result};

/// One simulated scattering event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Outgoing muon energy, GeV.
    pub e_out: f64,
    /// Outgoing muon transverse momentum, GeV.
    pub pt: f64,
    /// Outgoing muon pseudorapidity.
    pub eta: f64,
    /// Incoming muon energy, GeV (the condition).
    pub e_in: f64,
}

/// Incoming energies of the paper-shaped dataset: 50 to 200 GeV in steps of 25.
pub const CONDITION_ENERGIES: [f64; 7] = [50.0, 75.0, 100.0, 125.0, 150.0, 175.0, 200.0];

/// Feature names in preprocessed column order.
pub const FEATURES: [&str; 3] = ["energy", "pt", "eta"];

/// Z-score parameters of one column (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64], column: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("feature column"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        if !(std > 0.0) {
            return Err(Error::ZeroVariance(column));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub incoming_energy_mean: f64,
    pub pt_exponent: f64,
    /// One per column of [`FEATURES`].
    pub columns: Vec<Standardizer>,
}

impl PreprocessParams {
    fn raw(&self, e: &EventRecord) -> Result<[f64; 3]> {
        if e.pt < 0.0 {
            return Err(Error::Config(format!("negative transverse momentum {}", e.pt)));
        }
        Ok([e.e_out / self.incoming_energy_mean, libm::pow(e.pt, self.pt_exponent), e.eta])
    }

    /// Applies frozen parameters to new events (e.g. the test half).
    pub fn transform(&self, events: &[EventRecord]) -> Result<Vec<Vec<f64>>> {
        events
            .iter()
            .map(|e| {
                let raw = self.raw(e)?;
                Ok(raw.iter().zip(&self.columns).map(|(v, s)| s.apply(*v)).collect())
            })
            .collect()
    }

    /// Maps preprocessed features back to `(e_out, pt, eta)`.
    pub fn inverse(&self, features: &[f64]) -> Result<[f64; 3]> {
        if features.len() != 3 {
            return Err(Error::DimensionMismatch { left: features.len(), right: 3 });
        }
        let e = self.columns[0].invert(features[0]) * self.incoming_energy_mean;
        let pt = libm::pow(self.columns[1].invert(features[1]).max(0.0), 1.0 / self.pt_exponent);
        Ok([e, pt, self.columns[2].invert(features[2])])
    }
}

/// Energy over mean incoming energy, `pt^0.1`, then z-scores fitted on `events`.
pub fn preprocess(events: &[EventRecord]) -> Result<(Vec<Vec<f64>>, PreprocessParams)> {
    if events.is_empty() {
        return Err(Error::Empty("events"));
    }
    let incoming_energy_mean = events.iter().map(|e| e.e_in).sum::<f64>() / events.len() as f64;
    let mut params = PreprocessParams { incoming_energy_mean, pt_exponent: 0.1, columns: Vec::new() };
    let raw: Vec<[f64; 3]> = events.iter().map(|e| params.raw(e)).collect::<Result<_>>()?;
    for c in 0..3 {
        let column: Vec<f64> = raw.iter().map(|r| r[c]).collect();
        params.columns.push(Standardizer::fit(&column, c)?);
    }
    let features = params.transform(events)?;
    Ok((features, params))
}

/// Uniform bins over `[lower, upper]`: half-open except the last, which is
/// closed. Values outside the range land in the edge bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAxis {
    pub bits: usize,
    pub lower: f64,
    pub upper: f64,
}

impl BinAxis {
    pub fn new(bits: usize, lower: f64, upper: f64) -> Result<Self> {
        if bits == 0 {
            return Err(Error::Config("an axis needs at least one bit (two bins)".into()));
        }
        if !(lower < upper) {
            return Err(Error::Config(format!("empty bin range [{lower}, {upper}]")));
        }
        Ok(Self { bits, lower, upper })
    }

    pub fn n_bins(&self) -> usize {
        1 << self.bits
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.n_bins() as f64
    }

    pub fn bin(&self, value: f64) -> usize {
        let n = self.n_bins();
        if !(value > self.lower) {
            return 0;
        }
        let k = ((value - self.lower) / self.width()) as usize;
        k.min(n - 1)
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lower + (bin as f64 + 0.5) * self.width()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins()).map(|k| self.lower + k as f64 * self.width()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub axes: Vec<BinAxis>,
}

impl BinningSpec {
    /// Edges from the per-column min and max of `features`.
    pub fn from_data(features: &[Vec<f64>], bits: &[usize]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Empty("features"));
        }
        let axes = bits
            .iter()
            .enumerate()
            .map(|(c, &b)| {
                let (lo, hi) = features.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    (lo.min(row[c]), hi.max(row[c]))
                });
                BinAxis::new(b, lo, hi)
            })
            .collect::<Result<_>>()?;
        Ok(Self { axes })
    }

    pub fn register_bits(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.bits).collect()
    }

    /// Flat bin index of one feature row.
    pub fn index(&self, row: &[f64]) -> usize {
        let bins: Vec<usize> = self.axes.iter().zip(row).map(|(a, &v)| a.bin(v)).collect();
        join_index(&bins, &self.register_bits())
    }

    /// Bin-center coordinates of a flat index.
    pub fn centers(&self, index: usize) -> Vec<f64> {
        crate::dist::split_index(index, &self.register_bits())
            .into_iter()
            .zip(&self.axes)
            .map(|(b, a)| a.center(b))
            .collect()
    }

    /// Keeps only the listed feature columns.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self { axes: columns.iter().map(|&c| self.axes[c]).collect() }
    }
}

/// Normalized histogram of feature rows over the bin tuples of `spec`.
pub fn discretize(features: &[Vec<f64>], spec: &BinningSpec) -> Result<DiscreteDistribution> {
    if features.is_empty() {
        return Err(Error::Empty("features"));
    }
    if let Some(row) = features.iter().find(|r| r.len() != spec.axes.len()) {
        return Err(Error::DimensionMismatch { left: row.len(), right: spec.axes.len() });
    }
    let idx: Vec<usize> = features.iter().map(|r| spec.index(r)).collect();
    DiscreteDistribution::from_counts(&idx, spec.register_bits())
}

/// Column subset of row-major features.
pub fn select_columns(features: &[Vec<f64>], columns: &[usize]) -> Vec<Vec<f64>> {
    features.iter().map(|r| columns.iter().map(|&c| r[c]).collect()).collect()
}

/// Seeded shuffle, then equal halves (train first).
pub fn split_train_test<T: Clone>(events: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = events.len() / 2;
    let pick = |ix: &[usize]| ix.iter().map(|&i| events[i].clone()).collect();
    (pick(&order[..half]), pick(&order[half..]))
}

/// Correlations of (energy, pt, eta) in the reference Monte Carlo sample.
pub fn reference_correlation() -> [[f64; 3]; 3] {
    [[1.0, 0.43, 0.89], [0.43, 1.0, 0.61], [0.89, 0.61, 1.0]]
}

// Log-normal widths of e_out and pt; eta is Gaussian.
const ENERGY_LOG_WIDTH: f64 = 0.2;
const PT_LOG_WIDTH: f64 = 0.2;
const ETA_WIDTH: f64 = 0.5;

/// Draws `n_events` at incoming energy `condition` from a Gaussian copula
/// with correlation `target_corr`.
///
/// Marginals: `e_out = (0.1·E_in + 60)·exp(0.2 z₀)`,
/// `pt = (0.02·E_in + 3)·exp(0.2 z₁)`, `eta = 2.5 − 0.004·E_in + 0.5 z₂`.
/// Locations move linearly with `E_in`; the near-linear maps keep the
/// Pearson correlations of the raw features close to `target_corr`.
pub fn synthesize_mfc(
    n_events: usize,
    condition: f64,
    target_corr: &[[f64; 3]; 3],
    seed: u64,
) -> Result<Vec<EventRecord>> {
    for i in 0..3 {
        if (target_corr[i][i] - 1.0).abs() > 1e-12 {
            return Err(Error::Config("correlation matrix needs a unit diagonal".into()));
        }
        for j in 0..3 {
            if (target_corr[i][j] - target_corr[j][i]).abs() > 1e-12 {
                return Err(Error::Config("correlation matrix must be symmetric".into()));
            }
        }
    }
    if !(condition > 0.0) {
        return Err(Error::Config(format!("incoming energy {condition} must be positive")));
    }
    let m = Matrix3::from_fn(|i, j| target_corr[i][j]);
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e_scale = 0.1 * condition + 60.0;
    let pt_scale = 0.02 * condition + 3.0;
    let eta_loc = 2.5 - 0.004 * condition;
    let events = (0..n_events)
        .map(|_| {
            let g = nalgebra::Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let z = l * g;
            EventRecord {
                e_out: e_scale * libm::exp(ENERGY_LOG_WIDTH * z[0]),
                pt: pt_scale * libm::exp(PT_LOG_WIDTH * z[1]),
                eta: eta_loc + ETA_WIDTH * z[2],
                e_in: condition,
            }
        })
        .collect();
    Ok(events)
}

/// Synthetic events at every energy in `conditions`, each with its own seed stream.
pub fn synthesize_dataset(
    n_per_condition: usize,
    conditions: &[f64],
    target_corr: &[[f64; 3]; 3],
    seed: u64,
) -> Result<Vec<EventRecord>> {
    let mut all = Vec::with_capacity(n_per_condition * conditions.len());
    for (k, &c) in conditions.iter().enumerate() {
        let stream = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1);
        all.extend(synthesize_mfc(n_per_condition, c, target_corr, stream)?);
    }
    Ok(all)
}

/// Row-major `(e_out, pt, eta)` of events, for correlation checks.
pub fn raw_features(events: &[EventRecord]) -> Vec<Vec<f64>> {
    events.iter().map(|e| vec![e.e_out, e.pt, e.eta]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{pearson_correlation, total_variance};

    fn event(e_out: f64, pt: f64, eta: f64) -> EventRecord {
        EventRecord { e_out, pt, eta, e_in: 100.0 }
    }

    #[test]
    fn standardize_two_points() {
        let s = Standardizer::fit(&[1.0, 3.0], 0).unwrap();
        assert_eq!((s.apply(1.0), s.apply(3.0)), (-1.0, 1.0));
        assert_eq!(Standardizer::fit(&[2.0, 2.0], 4), Err(Error::ZeroVariance(4)));
    }

    #[test]
    fn pt_power_transform() {
        let params = PreprocessParams {
            incoming_energy_mean: 1.0,
            pt_exponent: 0.1,
            columns: vec![Standardizer { mean: 0.0, std: 1.0 }; 3],
        };
        let f = params.transform(&[event(1.0, 1024.0, 0.0)]).unwrap();
        assert!((f[0][1] - 2.0).abs() < 1e-12);
        assert_eq!(params.transform(&[event(1.0, 0.0, 0.0)]).unwrap()[0][1], 0.0);
        assert!(params.transform(&[event(1.0, -1.0, 0.0)]).is_err());
    }

    #[test]
    fn preprocess_round_trip() {
        let events = synthesize_mfc(500, 125.0, &reference_correlation(), 9).unwrap();
        let (features, params) = preprocess(&events).unwrap();
        for (f, e) in features.iter().zip(&events) {
            let [a, b, c] = params.inverse(f).unwrap();
            assert!((a - e.e_out).abs() < 1e-9 * e.e_out.max(1.0));
            assert!((b - e.pt).abs() < 1e-9 * e.pt.max(1.0));
            assert!((c - e.eta).abs() < 1e-9);
        }
        let constant: Vec<EventRecord> = (0..4).map(|i| event(5.0, i as f64 + 1.0, i as f64)).collect();
        assert_eq!(preprocess(&constant).unwrap_err(), Error::ZeroVariance(0));
        assert!(preprocess(&[]).is_err());
    }

    #[test]
    fn discretize_conventions() {
        let spec = BinningSpec { axes: vec![BinAxis::new(2, 0.0, 4.0).unwrap()] };
        let same: Vec<Vec<f64>> = vec![vec![1.2]; 5];
        assert_eq!(discretize(&same, &spec).unwrap().probs(), &[0.0, 1.0, 0.0, 0.0]);
        let centers: Vec<Vec<f64>> = (0..4).map(|b| vec![b as f64 + 0.5]).collect();
        assert_eq!(discretize(&centers, &spec).unwrap().probs(), &[0.25; 4]);
        assert_eq!(spec.index(&[4.0]), 3);
        assert_eq!(spec.index(&[1.0]), 1);
        assert_eq!(spec.index(&[-7.0]), 0);
        assert_eq!(spec.index(&[99.0]), 3);
        let outliers = vec![vec![-1.0], vec![10.0], vec![f64::NAN]];
        assert!((discretize(&outliers, &spec).unwrap().total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn multi_feature_index_layout() {
        let spec = BinningSpec {
            axes: vec![BinAxis::new(1, 0.0, 2.0).unwrap(), BinAxis::new(2, 0.0, 4.0).unwrap()],
        };
        // Feature 0 in bit 0, feature 1 in bits 1..3.
        assert_eq!(spec.index(&[1.5, 2.5]), 1 | (2 << 1));
        assert_eq!(spec.centers(1 | (2 << 1)), vec![1.5, 2.5]);
    }

    #[test]
    fn synthetic_correlations() {
        let events = synthesize_mfc(100_000, 125.0, &reference_correlation(), 1).unwrap();
        let r = pearson_correlation(&raw_features(&events)).unwrap();
        let target = reference_correlation();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - target[i][j]).abs() < 0.03, "({i},{j}) = {}", r[i][j]);
            }
        }
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let events = synthesize_mfc(100_000, 125.0, &id, 2).unwrap();
        let r = pearson_correlation(&raw_features(&events)).unwrap();
        assert!(r[0][1].abs() < 0.02 && r[0][2].abs() < 0.02 && r[1][2].abs() < 0.02);
    }

    #[test]
    fn synthetic_rejects_bad_correlation() {
        let bad = [[1.0, 0.99, 0.0], [0.99, 1.0, 0.99], [0.0, 0.99, 1.0]];
        assert_eq!(synthesize_mfc(10, 100.0, &bad, 0).unwrap_err(), Error::NotPositiveDefinite);
        let asym = [[1.0, 0.2, 0.0], [0.1, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(synthesize_mfc(10, 100.0, &asym, 0).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_condition_dependent() {
        let c = reference_correlation();
        assert_eq!(synthesize_mfc(50, 75.0, &c, 3).unwrap(), synthesize_mfc(50, 75.0, &c, 3).unwrap());
        let low = synthesize_mfc(5000, 50.0, &c, 4).unwrap();
        let high = synthesize_mfc(5000, 200.0, &c, 5).unwrap();
        let col = |ev: &[EventRecord]| -> Vec<Vec<f64>> { ev.iter().map(|e| vec![e.e_out]).collect() };
        let mut both = col(&low);
        both.extend(col(&high));
        let spec = BinningSpec::from_data(&both, &[3]).unwrap();
        let tv = total_variance(&discretize(&col(&low), &spec).unwrap(), &discretize(&col(&high), &spec).unwrap())
            .unwrap();
        assert!(tv >= 0.2, "tv {tv}");
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_stable() {
        let items: Vec<usize> = (0..10_240).collect();
        let (train, test) = split_train_test(&items, 8);
        assert_eq!((train.len(), test.len()), (5120, 5120));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
        assert_eq!(split_train_test(&items, 8), (train, test));
    }
}
