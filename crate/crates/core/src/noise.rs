//! Readout bit-flips, depolarizing noise after CNOTs, and confusion-matrix
//! readout mitigation.
//!
//! Noise acts on measured distributions and on pure-state trajectories rather
//! than density matrices.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::CircuitSpec;
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::sim::{AngleRef, Gate, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Bit-flip probability applied to every measured qubit.
    pub readout_flip_prob: f64,
    /// Per-qubit override of `readout_flip_prob`.
    pub per_qubit_readout: Option<Vec<f64>>,
    /// Two-qubit depolarizing probability after each CNOT.
    pub cnot_depol_prob: f64,
    /// Monte Carlo trajectories for the depolarizing channel.
    pub trajectories: usize,
    /// Faults per trajectory that are averaged exactly over all 16 Paulis
    /// before falling back to sampling one.
    pub exact_fault_branches: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            readout_flip_prob: 0.029,
            per_qubit_readout: None,
            cnot_depol_prob: 0.01,
            trajectories: 256,
            exact_fault_branches: 1,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self { readout_flip_prob: 0.0, cnot_depol_prob: 0.0, ..Self::default() }
    }

    pub fn readout_only(eps: f64) -> Self {
        Self { readout_flip_prob: eps, cnot_depol_prob: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..0.5).contains(&p);
        if !ok(self.readout_flip_prob) {
            return Err(Error::Config("readout probabilities must lie in [0, 0.5)".into()));
        }
        if !(0.0..=1.0).contains(&self.cnot_depol_prob) {
            return Err(Error::Config("depolarizing probability must lie in [0, 1]".into()));
        }
        if let Some(v) = &self.per_qubit_readout {
            if !v.iter().all(|&p| ok(p)) {
                return Err(Error::Config("readout probabilities must lie in [0, 0.5)".into()));
            }
        }
        if self.trajectories == 0 {
            return Err(Error::Config("need at least one trajectory".into()));
        }
        Ok(())
    }

    /// Flip probability of each of `n_qubits` qubits.
    pub fn readout_probs(&self, n_qubits: usize) -> Result<Vec<f64>> {
        match &self.per_qubit_readout {
            Some(v) if v.len() != n_qubits => {
                Err(Error::DimensionMismatch { left: v.len(), right: n_qubits })
            }
            Some(v) => Ok(v.clone()),
            None => Ok(vec![self.readout_flip_prob; n_qubits]),
        }
    }
}

/// `p_noisy = (⊗_k [[1−ε_k, ε_k], [ε_k, 1−ε_k]]) · p_true`.
pub fn apply_readout_noise(p_true: &DiscreteDistribution, config: &NoiseConfig) -> Result<DiscreteDistribution> {
    let n_qubits: usize = p_true.register_bits().iter().sum();
    let eps = config.readout_probs(n_qubits)?;
    let mut probs = p_true.probs().to_vec();
    for (k, &e) in eps.iter().enumerate() {
        if e == 0.0 {
            continue;
        }
        let mask = 1usize << k;
        for i in 0..probs.len() {
            if i & mask == 0 {
                let (a, b) = (probs[i], probs[i | mask]);
                probs[i] = (1.0 - e) * a + e * b;
                probs[i | mask] = e * a + (1.0 - e) * b;
            }
        }
    }
    Ok(DiscreteDistribution::new(probs, p_true.register_bits().to_vec())?
        .with_condition(p_true.condition()))
}

/// Column-stochastic readout matrix, `entry(observed, prepared)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_qubits: usize,
    /// Row-major `2^N × 2^N`.
    entries: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn new(n_qubits: usize, entries: Vec<f64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { left: entries.len(), right: dim * dim });
        }
        Ok(Self { n_qubits, entries })
    }

    pub fn identity(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { n_qubits, entries }
    }

    /// Exact tensor-product matrix of the readout model in `config`.
    pub fn from_readout(n_qubits: usize, config: &NoiseConfig) -> Result<Self> {
        let dim = 1usize << n_qubits;
        let eps = config.readout_probs(n_qubits)?;
        let mut entries = vec![0.0; dim * dim];
        for obs in 0..dim {
            for prep in 0..dim {
                entries[obs * dim + prep] = eps
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| if (obs ^ prep) >> k & 1 == 1 { e } else { 1.0 - e })
                    .product();
            }
        }
        Ok(Self { n_qubits, entries })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn entry(&self, observed: usize, prepared: usize) -> f64 {
        self.entries[observed * self.dim() + prepared]
    }

    /// Solves `M·p = p_noisy`. Negative entries are clipped and the result
    /// renormalized; the flag reports whether clipping happened.
    pub fn solve(&self, p_noisy: &[f64]) -> Result<(Vec<f64>, bool)> {
        let dim = self.dim();
        if p_noisy.len() != dim {
            return Err(Error::DimensionMismatch { left: p_noisy.len(), right: dim });
        }
        let m = DMatrix::from_row_slice(dim, dim, &self.entries);
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularMatrix);
        }
        let x = lu.solve(&DVector::from_column_slice(p_noisy)).ok_or(Error::SingularMatrix)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        let clipped = x.iter().any(|&v| v < 0.0);
        let mut p: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|v| *v /= total);
        }
        Ok((p, clipped))
    }
}

/// Inverts the readout channel described by `matrix`.
pub fn mitigate_readout(p_noisy: &DiscreteDistribution, matrix: &ConfusionMatrix) -> Result<DiscreteDistribution> {
    let (p, _) = matrix.solve(p_noisy.probs())?;
    Ok(DiscreteDistribution::new(p, p_noisy.register_bits().to_vec())?
        .with_condition(p_noisy.condition()))
}

/// Calibration: prepare every basis state, measure `shots_per_basis_state`
/// times through the readout channel, and record observed frequencies.
pub fn estimate_confusion_matrix(
    n_qubits: usize,
    config: &NoiseConfig,
    shots_per_basis_state: usize,
) -> Result<ConfusionMatrix> {
    if shots_per_basis_state == 0 {
        return Err(Error::Config("need at least one calibration shot".into()));
    }
    let eps = config.readout_probs(n_qubits)?;
    let dim = 1usize << n_qubits;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut entries = vec![0.0; dim * dim];
    for prep in 0..dim {
        for _ in 0..shots_per_basis_state {
            let mut obs = prep;
            for (k, &e) in eps.iter().enumerate() {
                if e > 0.0 && rng.gen::<f64>() < e {
                    obs ^= 1 << k;
                }
            }
            entries[obs * dim + prep] += 1.0;
        }
    }
    entries.iter_mut().for_each(|e| *e /= shots_per_basis_state as f64);
    ConfusionMatrix::new(n_qubits, entries)
}

/// Distribution of `circuit` with a two-qubit depolarizing channel of
/// strength `config.cnot_depol_prob` after every CNOT, averaged over
/// `config.trajectories` seeded trajectories.
///
/// A depolarizing fault is a uniformly random two-qubit Pauli (identity
/// included). The first `exact_fault_branches` faults of a trajectory are
/// averaged over all 16 Paulis; later ones are sampled.
pub fn apply_cnot_depolarizing<R: Rng + ?Sized>(
    circuit: &CircuitSpec,
    theta: &[f64],
    data_angles: Option<&[f64]>,
    config: &NoiseConfig,
    rng: &mut R,
) -> Result<DiscreteDistribution> {
    config.validate()?;
    let q = config.cnot_depol_prob;
    let exact = circuit.run(theta, data_angles)?;
    let layout = circuit.register_bits();
    if q == 0.0 {
        return Ok(exact.probabilities_with_layout(layout));
    }
    let angles: Vec<Option<f64>> = circuit
        .gates()
        .iter()
        .map(|g| {
            g.angle_ref().map(|a| match a {
                AngleRef::Trainable(s) => theta[s],
                AngleRef::Data(s) => data_angles.map_or(0.0, |d| d[s]),
            })
        })
        .collect();
    let exact_probs: Vec<f64> = exact.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    let n_cnot = circuit.gates().iter().filter(|g| matches!(g, Gate::Cnot { .. })).count();

    let mut acc = vec![0.0; exact_probs.len()];
    let mut clean = 0usize;
    let mut faults = vec![false; n_cnot];
    for _ in 0..config.trajectories {
        let mut any = false;
        for f in faults.iter_mut() {
            *f = rng.gen::<f64>() < q;
            any |= *f;
        }
        if !any {
            clean += 1;
            continue;
        }
        let mut run = Trajectory {
            gates: circuit.gates(),
            angles: &angles,
            faults: &faults,
            branches_left: config.exact_fault_branches,
            acc: &mut acc,
        };
        run.go(StateVector::zero(circuit.n_qubits()), 0, 0, 1.0, rng)?;
    }
    let n = config.trajectories as f64;
    let probs = acc
        .iter()
        .zip(&exact_probs)
        .map(|(a, e)| (a + clean as f64 * e) / n)
        .collect();
    DiscreteDistribution::new(probs, layout)
}

struct Trajectory<'a> {
    gates: &'a [Gate],
    angles: &'a [Option<f64>],
    faults: &'a [bool],
    branches_left: usize,
    acc: &'a mut Vec<f64>,
}

impl Trajectory<'_> {
    fn go<R: Rng + ?Sized>(
        &mut self,
        mut state: StateVector,
        start: usize,
        mut cnot_index: usize,
        weight: f64,
        rng: &mut R,
    ) -> Result<()> {
        for (g, gate) in self.gates.iter().enumerate().skip(start) {
            state.apply(gate, self.angles[g])?;
            if let Gate::Cnot { control, target } = *gate {
                let faulty = self.faults[cnot_index];
                cnot_index += 1;
                if !faulty {
                    continue;
                }
                if self.branches_left > 0 {
                    self.branches_left -= 1;
                    for pauli in 0..16u8 {
                        let mut branch = state.clone();
                        branch.apply_pauli(control, pauli & 3);
                        branch.apply_pauli(target, pauli >> 2);
                        self.go(branch, g + 1, cnot_index, weight / 16.0, rng)?;
                    }
                    self.branches_left += 1;
                    return Ok(());
                }
                let pauli: u8 = rng.gen_range(0..16);
                state.apply_pauli(control, pauli & 3);
                state.apply_pauli(target, pauli >> 2);
            }
        }
        for (a, amp) in self.acc.iter_mut().zip(state.amplitudes()) {
            *a += weight * amp.norm_sqr();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::QubitRange;
    use crate::metrics::total_variance;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::one_dim(p.to_vec()).unwrap()
    }

    #[test]
    fn readout_noise_values() {
        let cfg = NoiseConfig::readout_only(0.1);
        let p = apply_readout_noise(&dist(&[1.0, 0.0]), &cfg).unwrap();
        assert!((p.probs()[0] - 0.9).abs() < 1e-15 && (p.probs()[1] - 0.1).abs() < 1e-15);
        let p = apply_readout_noise(&dist(&[1.0, 0.0, 0.0, 0.0]), &cfg).unwrap();
        for (x, y) in p.probs().iter().zip([0.81, 0.09, 0.09, 0.01]) {
            assert!((x - y).abs() < 1e-15);
        }
        let same = apply_readout_noise(&dist(&[0.3, 0.7]), &NoiseConfig::noiseless()).unwrap();
        assert_eq!(same.probs(), &[0.3, 0.7]);
    }

    #[test]
    fn mitigation_inverts_known_noise() {
        let cfg = NoiseConfig::readout_only(0.1);
        let m = ConfusionMatrix::from_readout(1, &cfg).unwrap();
        let p = mitigate_readout(&dist(&[0.9, 0.1]), &m).unwrap();
        assert!((p.probs()[0] - 1.0).abs() < 1e-10 && p.probs()[1].abs() < 1e-10);
        let id = mitigate_readout(&dist(&[0.2, 0.8]), &ConfusionMatrix::identity(1)).unwrap();
        assert!((id.probs()[0] - 0.2).abs() < 1e-15);
        let singular = ConfusionMatrix::new(1, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(mitigate_readout(&dist(&[0.5, 0.5]), &singular), Err(Error::SingularMatrix));
    }

    #[test]
    fn mitigation_round_trip_three_qubits() {
        let cfg = NoiseConfig::readout_only(0.029);
        let p = dist(&[0.05, 0.1, 0.3, 0.05, 0.2, 0.1, 0.15, 0.05]);
        let noisy = apply_readout_noise(&p, &cfg).unwrap();
        let m = ConfusionMatrix::from_readout(3, &cfg).unwrap();
        let back = mitigate_readout(&noisy, &m).unwrap();
        for (a, b) in back.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn calibration_estimates() {
        let m = estimate_confusion_matrix(2, &NoiseConfig::noiseless(), 10).unwrap();
        assert_eq!(m, ConfusionMatrix::identity(2));
        let cfg = NoiseConfig { seed: 7, ..NoiseConfig::readout_only(0.1) };
        let m = estimate_confusion_matrix(1, &cfg, 1_000_000).unwrap();
        for (o, t, v) in [(0, 0, 0.9), (1, 0, 0.1), (0, 1, 0.1), (1, 1, 0.9)] {
            assert!((m.entry(o, t) - v).abs() < 0.005);
        }
        let m2 = estimate_confusion_matrix(2, &cfg, 200_000).unwrap();
        let exact = ConfusionMatrix::from_readout(2, &cfg).unwrap();
        for o in 0..4 {
            let col: f64 = (0..4).map(|t| m2.entry(t, o)).sum();
            assert!((col - 1.0).abs() < 1e-9);
            for t in 0..4 {
                assert!((m2.entry(o, t) - exact.entry(o, t)).abs() < 0.01);
            }
        }
    }

    fn single_cnot() -> CircuitSpec {
        CircuitSpec::new(
            2,
            vec![Gate::Cnot { control: 0, target: 1 }],
            vec![QubitRange { start: 0, len: 2 }],
        )
        .unwrap()
    }

    #[test]
    fn full_depolarization_of_one_cnot() {
        let cfg = NoiseConfig { cnot_depol_prob: 1.0, trajectories: 10, ..NoiseConfig::noiseless() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = apply_cnot_depolarizing(&single_cnot(), &[], None, &cfg, &mut rng).unwrap();
        for &x in p.probs() {
            assert!((x - 0.25).abs() < 1e-12);
        }
        let q0 = NoiseConfig::noiseless();
        let p = apply_cnot_depolarizing(&single_cnot(), &[], None, &q0, &mut rng).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn depolarizing_moves_towards_uniform() {
        let bell = CircuitSpec::new(
            2,
            vec![Gate::H { target: 0 }, Gate::Cnot { control: 0, target: 1 }],
            vec![QubitRange { start: 0, len: 2 }],
        )
        .unwrap();
        let uniform = dist(&[0.25; 4]);
        let exact = bell.run(&[], None).unwrap().probabilities();
        let cfg = NoiseConfig { cnot_depol_prob: 0.2, trajectories: 500, ..NoiseConfig::noiseless() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = apply_cnot_depolarizing(&bell, &[], None, &cfg, &mut rng).unwrap();
        assert!(
            total_variance(&noisy, &uniform).unwrap() <= total_variance(&exact, &uniform).unwrap()
        );
    }
}
