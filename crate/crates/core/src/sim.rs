//! Dense statevector simulation.
//!
//! Basis index `b` encodes qubit `k` in bit `k` (qubit 0 is the least
//! significant bit). Every other module relies on this ordering.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};

/// Where a rotation takes its angle from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleRef {
    /// Index into the trainable parameter vector.
    Trainable(usize),
    /// Index into the data (feature map) angles. Never touched by optimizers.
    Data(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Ry,
    Rx,
    Rzz,
    Cnot,
    H,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Ry => "RY",
            GateKind::Rx => "RX",
            GateKind::Rzz => "RZZ",
            GateKind::Cnot => "CNOT",
            GateKind::H => "H",
        }
    }
}

/// One gate of a circuit.
///
/// `RY(θ) = exp(-iθY/2)`, `RX(θ) = exp(-iθX/2)` and `RZZ(θ) = exp(-iθ Z⊗Z)`.
/// The two-qubit rotation carries no factor one half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    H { target: usize },
    Cnot { control: usize, target: usize },
    Ry { target: usize, angle: AngleRef },
    Rx { target: usize, angle: AngleRef },
    Rzz { qubits: [usize; 2], angle: AngleRef },
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::H { .. } => GateKind::H,
            Gate::Cnot { .. } => GateKind::Cnot,
            Gate::Ry { .. } => GateKind::Ry,
            Gate::Rx { .. } => GateKind::Rx,
            Gate::Rzz { .. } => GateKind::Rzz,
        }
    }

    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::H { target } | Gate::Ry { target, .. } | Gate::Rx { target, .. } => vec![target],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Rzz { qubits, .. } => qubits.to_vec(),
        }
    }

    pub fn angle_ref(&self) -> Option<AngleRef> {
        match *self {
            Gate::Ry { angle, .. } | Gate::Rx { angle, .. } | Gate::Rzz { angle, .. } => {
                Some(angle)
            }
            Gate::H { .. } | Gate::Cnot { .. } => None,
        }
    }

    pub fn trainable_slot(&self) -> Option<usize> {
        match self.angle_ref() {
            Some(AngleRef::Trainable(slot)) => Some(slot),
            _ => None,
        }
    }

    /// Checks qubit indices against a register of `n_qubits`.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let targets = self.targets();
        for &q in &targets {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { qubit: q, n_qubits });
            }
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::DuplicateTargets(targets[0]));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros state `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() {
            return Err(Error::InvalidCircuit(alloc::format!(
                "{len} amplitudes is not a power of two"
            )));
        }
        Ok(Self { n_qubits: len.trailing_zeros() as usize, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `gate` in place. `angle` must be given exactly for rotations.
    pub fn apply(&mut self, gate: &Gate, angle: Option<f64>) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let kind = gate.kind();
        match (gate.angle_ref(), angle) {
            (Some(_), None) => return Err(Error::MissingAngle(kind.name())),
            (None, Some(_)) => return Err(Error::UnexpectedAngle(kind.name())),
            _ => {}
        }
        let theta = angle.unwrap_or(0.0);
        match *gate {
            Gate::H { target } => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_single(target, [[h, h], [h, -h]]);
            }
            Gate::Ry { target, .. } => {
                let (s, c) = libm::sincos(theta / 2.0);
                let (c, s) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
                self.apply_single(target, [[c, -s], [s, c]]);
            }
            Gate::Rx { target, .. } => {
                let (s, c) = libm::sincos(theta / 2.0);
                let c = Complex64::new(c, 0.0);
                let mis = Complex64::new(0.0, -s);
                self.apply_single(target, [[c, mis], [mis, c]]);
            }
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
            Gate::Rzz { qubits: [a, b], .. } => self.apply_zz_phase(a, b, theta),
        }
        Ok(())
    }

    fn apply_single(&mut self, target: usize, m: [[Complex64; 2]; 2]) {
        let mask = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[j] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let (cm, tm) = (1usize << control, 1usize << target);
        for i in 0..self.amplitudes.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amplitudes.swap(i, i | tm);
            }
        }
    }

    // exp(-iθ Z_a Z_b): phase e^{-iθ} on even parity, e^{+iθ} on odd parity.
    fn apply_zz_phase(&mut self, a: usize, b: usize, theta: f64) {
        let (s, c) = libm::sincos(theta);
        let even = Complex64::new(c, -s);
        let odd = Complex64::new(c, s);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            let parity = ((i >> a) ^ (i >> b)) & 1;
            *amp *= if parity == 0 { even } else { odd };
        }
    }

    /// Pauli X (1), Y (2) or Z (3) on one qubit; 0 is the identity.
    pub(crate) fn apply_pauli(&mut self, qubit: usize, pauli: u8) {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match pauli {
            1 => self.apply_single(qubit, [[zero, one], [one, zero]]),
            2 => self.apply_single(qubit, [[zero, -i], [i, zero]]),
            3 => self.apply_single(qubit, [[one, zero], [zero, -one]]),
            _ => {}
        }
    }

    /// Born-rule probabilities `|⟨b|ψ⟩|²` as a single register of `n_qubits` bits.
    pub fn probabilities(&self) -> DiscreteDistribution {
        self.probabilities_with_layout(alloc::vec![self.n_qubits])
    }

    pub(crate) fn probabilities_with_layout(&self, register_bits: Vec<usize>) -> DiscreteDistribution {
        let probs = self.amplitudes.iter().map(|a| a.norm_sqr()).collect();
        DiscreteDistribution::new(probs, register_bits)
            .expect("register layout covers every qubit")
    }
}

/// Functional form of [`StateVector::apply`].
pub fn apply_gate(mut state: StateVector, gate: &Gate, angle: Option<f64>) -> Result<StateVector> {
    state.apply(gate, angle)?;
    Ok(state)
}

pub fn probabilities(state: &StateVector) -> DiscreteDistribution {
    state.probabilities()
}

/// Draws `n_shots` flat bin indices from `dist` with a seeded ChaCha stream.
pub fn sample(dist: &DiscreteDistribution, n_shots: usize, rng_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_with_rng(dist, n_shots, &mut rng)
}

pub fn sample_with_rng<R: Rng + ?Sized>(
    dist: &DiscreteDistribution,
    n_shots: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for &p in dist.probs() {
        acc += p.max(0.0);
        cumulative.push(acc);
    }
    let last = cumulative.len() - 1;
    (0..n_shots)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            // First bin whose cumulative mass exceeds u; skips zero-mass bins.
            cumulative.partition_point(|&c| c <= u).min(last)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    const EPS: f64 = 1e-12;

    fn close(a: Complex64, re: f64, im: f64) -> bool {
        (a.re - re).abs() < EPS && (a.im - im).abs() < EPS
    }

    fn ry(t: usize) -> Gate {
        Gate::Ry { target: t, angle: AngleRef::Trainable(0) }
    }

    #[test]
    fn hadamard_on_zero() {
        let s = apply_gate(StateVector::zero(1), &Gate::H { target: 0 }, None).unwrap();
        assert!(close(s.amplitudes()[0], FRAC_1_SQRT_2, 0.0));
        assert!(close(s.amplitudes()[1], FRAC_1_SQRT_2, 0.0));
    }

    #[test]
    fn cnot_truth_table() {
        // |10⟩ with qubit 0 as control set: basis index 0b01.
        let mut amps = vec![Complex64::new(0.0, 0.0); 4];
        amps[0b01] = Complex64::new(1.0, 0.0);
        let s = StateVector::from_amplitudes(amps).unwrap();
        let s = apply_gate(s, &Gate::Cnot { control: 0, target: 1 }, None).unwrap();
        assert!(close(s.amplitudes()[0b11], 1.0, 0.0));
    }

    #[test]
    fn ry_pi_flips() {
        let s = apply_gate(StateVector::zero(1), &ry(0), Some(PI)).unwrap();
        assert!(close(s.amplitudes()[0], 0.0, 0.0));
        assert!(close(s.amplitudes()[1], 1.0, 0.0));
    }

    #[test]
    fn rzz_phase_on_zero_zero() {
        let theta = 0.37;
        let g = Gate::Rzz { qubits: [0, 1], angle: AngleRef::Trainable(0) };
        let s = apply_gate(StateVector::zero(2), &g, Some(theta)).unwrap();
        assert!(close(s.amplitudes()[0], libm::cos(theta), -libm::sin(theta)));
    }

    #[test]
    fn ry_pi_over_three_probabilities() {
        let s = apply_gate(StateVector::zero(1), &ry(0), Some(FRAC_PI_3)).unwrap();
        let p = s.probabilities();
        assert!((p.probs()[0] - 0.75).abs() < 1e-12);
        assert!((p.probs()[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bell_probabilities() {
        let mut s = StateVector::zero(2);
        s.apply(&Gate::H { target: 0 }, None).unwrap();
        s.apply(&Gate::Cnot { control: 0, target: 1 }, None).unwrap();
        let p = s.probabilities();
        for (x, y) in p.probs().iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn error_paths() {
        let mut s = StateVector::zero(2);
        assert_eq!(
            s.apply(&Gate::H { target: 2 }, None),
            Err(Error::QubitOutOfRange { qubit: 2, n_qubits: 2 })
        );
        assert_eq!(s.apply(&ry(0), None), Err(Error::MissingAngle("RY")));
        assert_eq!(s.apply(&Gate::H { target: 0 }, Some(1.0)), Err(Error::UnexpectedAngle("H")));
        assert_eq!(
            s.apply(&Gate::Cnot { control: 1, target: 1 }, None),
            Err(Error::DuplicateTargets(1))
        );
        let rzz = Gate::Rzz { qubits: [0, 0], angle: AngleRef::Trainable(0) };
        assert_eq!(s.apply(&rzz, Some(0.1)), Err(Error::DuplicateTargets(0)));
    }

    #[test]
    fn inverse_rotations_restore_state() {
        let mut s = StateVector::zero(3);
        s.apply(&Gate::H { target: 0 }, None).unwrap();
        s.apply(&ry(1), Some(0.3)).unwrap();
        s.apply(&Gate::Cnot { control: 0, target: 2 }, None).unwrap();
        let reference = s.clone();
        let gates = [
            ry(2),
            Gate::Rx { target: 1, angle: AngleRef::Trainable(0) },
            Gate::Rzz { qubits: [2, 0], angle: AngleRef::Trainable(0) },
        ];
        for g in &gates {
            for theta in [0.0, FRAC_PI_4, FRAC_PI_2, PI, 3.0 * FRAC_PI_2] {
                let mut t = reference.clone();
                t.apply(g, Some(theta)).unwrap();
                assert!((t.norm_sqr() - 1.0).abs() < 1e-10);
                t.apply(g, Some(-theta)).unwrap();
                for (a, b) in t.amplitudes().iter().zip(reference.amplitudes()) {
                    assert!((a - b).norm() < 1e-10);
                }
            }
        }
        for g in [Gate::H { target: 1 }, Gate::Cnot { control: 2, target: 1 }] {
            let mut t = reference.clone();
            t.apply(&g, None).unwrap();
            t.apply(&g, None).unwrap();
            for (a, b) in t.amplitudes().iter().zip(reference.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_degenerate_and_deterministic() {
        let d = DiscreteDistribution::one_dim(vec![1.0, 0.0]).unwrap();
        assert!(sample(&d, 100, 3).iter().all(|&b| b == 0));
        let d = DiscreteDistribution::one_dim(vec![0.5, 0.5]).unwrap();
        assert_eq!(sample(&d, 1000, 42), sample(&d, 1000, 42));
    }

    #[test]
    fn sampling_frequencies_concentrate() {
        let d = DiscreteDistribution::one_dim(vec![0.5, 0.5]).unwrap();
        for seed in 0..3 {
            let shots = sample(&d, 1_000_000, seed);
            let ones = shots.iter().filter(|&&b| b == 1).count() as f64 / 1e6;
            assert!((ones - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn sample_bit_order_matches_probabilities() {
        // X on qubit 1 only: basis index 0b10 = 2.
        let s = apply_gate(StateVector::zero(2), &ry(1), Some(PI)).unwrap();
        let p = s.probabilities();
        assert!((p.probs()[2] - 1.0).abs() < 1e-12);
        assert!(sample(&p, 50, 1).iter().all(|&b| b == 2));
    }
}
