//! Circuit templates: the layered hardware-efficient ansatz, the all-to-all
//! `RZZ` ansatz for one-dimensional targets, multi-register circuits joined by
//! fixed correlation blocks, and the conditional circuit with an `RY` feature map.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{AngleRef, Gate, GateKind, StateVector};

/// A contiguous block of qubits holding one feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitRange {
    pub start: usize,
    pub len: usize,
}

impl QubitRange {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn qubit(&self, i: usize) -> usize {
        self.start + i
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawCircuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    registers: Vec<QubitRange>,
}

/// An ordered gate list with trainable and data angle slots.
///
/// Trainable slots are exactly `0..n_parameters`, each used by one gate.
/// Data slots are exactly `0..n_data_slots`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuit", into = "RawCircuit")]
pub struct CircuitSpec {
    n_qubits: usize,
    gates: Vec<Gate>,
    registers: Vec<QubitRange>,
    n_parameters: usize,
    n_data_slots: usize,
    slot_kinds: Vec<GateKind>,
}

impl TryFrom<RawCircuit> for CircuitSpec {
    type Error = Error;

    fn try_from(raw: RawCircuit) -> Result<Self> {
        CircuitSpec::new(raw.n_qubits, raw.gates, raw.registers)
    }
}

impl From<CircuitSpec> for RawCircuit {
    fn from(c: CircuitSpec) -> Self {
        RawCircuit { n_qubits: c.n_qubits, gates: c.gates, registers: c.registers }
    }
}

impl CircuitSpec {
    pub fn new(n_qubits: usize, gates: Vec<Gate>, registers: Vec<QubitRange>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidCircuit("circuit needs at least one qubit".into()));
        }
        let mut next = 0;
        for r in &registers {
            if r.start != next || r.len == 0 {
                return Err(Error::InvalidCircuit(format!(
                    "registers must tile the qubits in order; got {r:?} at qubit {next}"
                )));
            }
            next = r.end();
        }
        if next != n_qubits {
            return Err(Error::InvalidCircuit(format!(
                "registers cover {next} of {n_qubits} qubits"
            )));
        }

        let mut trainable: Vec<Option<GateKind>> = Vec::new();
        let mut data: Vec<bool> = Vec::new();
        for gate in &gates {
            gate.validate(n_qubits)?;
            match gate.angle_ref() {
                Some(AngleRef::Trainable(slot)) => {
                    if slot >= trainable.len() {
                        trainable.resize(slot + 1, None);
                    }
                    if trainable[slot].replace(gate.kind()).is_some() {
                        return Err(Error::InvalidCircuit(format!(
                            "trainable slot {slot} used by more than one gate"
                        )));
                    }
                }
                Some(AngleRef::Data(slot)) => {
                    if slot >= data.len() {
                        data.resize(slot + 1, false);
                    }
                    data[slot] = true;
                }
                None => {}
            }
        }
        let slot_kinds = trainable
            .iter()
            .enumerate()
            .map(|(slot, k)| {
                k.ok_or_else(|| Error::InvalidCircuit(format!("trainable slot {slot} is unused")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(slot) = data.iter().position(|used| !used) {
            return Err(Error::InvalidCircuit(format!("data slot {slot} is unused")));
        }
        Ok(Self {
            n_qubits,
            n_parameters: slot_kinds.len(),
            n_data_slots: data.len(),
            gates,
            registers,
            slot_kinds,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n_parameters(&self) -> usize {
        self.n_parameters
    }

    pub fn n_data_slots(&self) -> usize {
        self.n_data_slots
    }

    pub fn registers(&self) -> &[QubitRange] {
        &self.registers
    }

    pub fn register_bits(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.len).collect()
    }

    /// Gate kind that consumes trainable slot `slot`.
    pub fn slot_kind(&self, slot: usize) -> Option<GateKind> {
        self.slot_kinds.get(slot).copied()
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind() == kind).count()
    }

    /// `U(X, Θ)|0…0⟩`.
    pub fn run(&self, theta: &[f64], data_angles: Option<&[f64]>) -> Result<StateVector> {
        if theta.len() != self.n_parameters {
            return Err(Error::ParameterCount { expected: self.n_parameters, actual: theta.len() });
        }
        let data = data_angles.unwrap_or(&[]);
        if self.n_data_slots > 0 && data.len() != self.n_data_slots {
            return Err(Error::DataAngleCount { expected: self.n_data_slots, actual: data.len() });
        }
        let mut state = StateVector::zero(self.n_qubits);
        for gate in &self.gates {
            let angle = gate.angle_ref().map(|a| match a {
                AngleRef::Trainable(s) => theta[s],
                AngleRef::Data(s) => data[s],
            });
            state.apply(gate, angle)?;
        }
        Ok(state)
    }

    /// Appends `other`'s gates, shifting its trainable slots past ours.
    /// Register layouts must agree.
    pub fn then(&self, other: &CircuitSpec) -> Result<CircuitSpec> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch { left: self.n_qubits, right: other.n_qubits });
        }
        let offset = self.n_parameters;
        let data_offset = self.n_data_slots;
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().map(|g| shift_slots(*g, offset, data_offset)));
        CircuitSpec::new(self.n_qubits, gates, self.registers.clone())
    }
}

fn shift_slots(gate: Gate, offset: usize, data_offset: usize) -> Gate {
    let shift = |a: AngleRef| match a {
        AngleRef::Trainable(s) => AngleRef::Trainable(s + offset),
        AngleRef::Data(s) => AngleRef::Data(s + data_offset),
    };
    match gate {
        Gate::Ry { target, angle } => Gate::Ry { target, angle: shift(angle) },
        Gate::Rx { target, angle } => Gate::Rx { target, angle: shift(angle) },
        Gate::Rzz { qubits, angle } => Gate::Rzz { qubits, angle: shift(angle) },
        g => g,
    }
}

/// `U(X,Θ)|0…0⟩` for a circuit.
pub fn run_circuit(
    circuit: &CircuitSpec,
    theta: &[f64],
    data_angles: Option<&[f64]>,
) -> Result<StateVector> {
    circuit.run(theta, data_angles)
}

#[derive(Default)]
struct Builder {
    gates: Vec<Gate>,
    next_slot: usize,
}

impl Builder {
    fn slot(&mut self) -> AngleRef {
        let s = self.next_slot;
        self.next_slot += 1;
        AngleRef::Trainable(s)
    }

    fn ry_layer(&mut self, qubits: impl Iterator<Item = usize>) {
        for target in qubits {
            let angle = self.slot();
            self.gates.push(Gate::Ry { target, angle });
        }
    }

    fn rx_layer(&mut self, qubits: impl Iterator<Item = usize>) {
        for target in qubits {
            let angle = self.slot();
            self.gates.push(Gate::Rx { target, angle });
        }
    }

    fn cnot_chain(&mut self, range: QubitRange) {
        for k in 1..range.len {
            self.gates.push(Gate::Cnot { control: range.qubit(k - 1), target: range.qubit(k) });
        }
    }

    fn finish(self, n_qubits: usize, registers: Vec<QubitRange>) -> CircuitSpec {
        CircuitSpec::new(n_qubits, self.gates, registers).expect("builder emits valid circuits")
    }
}

fn single_register(n_qubits: usize) -> Vec<QubitRange> {
    vec![QubitRange { start: 0, len: n_qubits }]
}

fn registers(n_registers: usize, qubits_per_register: usize) -> Vec<QubitRange> {
    (0..n_registers)
        .map(|r| QubitRange { start: r * qubits_per_register, len: qubits_per_register })
        .collect()
}

/// Layered ansatz: each layer is `RY` on every qubit, optionally `RX` on every
/// qubit, then the CNOT chain `k → k+1`. A closing `RY` layer precedes
/// measurement. Parameter count is `n_layers·N·(1 + with_rx) + N`.
pub fn build_hardware_efficient(n_qubits: usize, n_layers: usize, with_rx: bool) -> Result<CircuitSpec> {
    if n_qubits == 0 {
        return Err(Error::Config("hardware-efficient ansatz needs at least one qubit".into()));
    }
    let all = QubitRange { start: 0, len: n_qubits };
    let mut b = Builder::default();
    for _ in 0..n_layers {
        b.ry_layer(0..n_qubits);
        if with_rx {
            b.rx_layer(0..n_qubits);
        }
        b.cnot_chain(all);
    }
    b.ry_layer(0..n_qubits);
    Ok(b.finish(n_qubits, single_register(n_qubits)))
}

/// One `RY`+`RX` layer, `RZZ` on every pair `i < j` in lexicographic order,
/// then a closing `RY` layer: `2N + N(N−1)/2 + N` parameters.
pub fn build_1d_rzz_ansatz(n_qubits: usize) -> Result<CircuitSpec> {
    if n_qubits < 2 {
        return Err(Error::Config("the RZZ ansatz needs at least two qubits".into()));
    }
    let mut b = Builder::default();
    b.ry_layer(0..n_qubits);
    b.rx_layer(0..n_qubits);
    for i in 0..n_qubits {
        for j in i + 1..n_qubits {
            let angle = b.slot();
            b.gates.push(Gate::Rzz { qubits: [i, j], angle });
        }
    }
    b.ry_layer(0..n_qubits);
    Ok(b.finish(n_qubits, single_register(n_qubits)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// Register `r` talks to `r + 1`.
    Linear,
    /// Every pair of registers.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairDepth {
    /// Only the first qubit of each register.
    FirstOnly,
    /// Qubit `i` of one register with qubit `i` of the other, for every `i`.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStyle {
    /// `H` on both qubits then `CX(qA_i → qB_i)`, per connected pair.
    HhCx,
    /// `H` on the first register then a CNOT cascade: Bell or GHZ preparation.
    Bell,
}

/// One of the eight parameter-free correlation blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorrelationBlockChoice {
    pub connectivity: Connectivity,
    pub depth_pairs: PairDepth,
    pub style: BlockStyle,
}

impl CorrelationBlockChoice {
    pub const LINEAR_FIRST: Self = Self {
        connectivity: Connectivity::Linear,
        depth_pairs: PairDepth::FirstOnly,
        style: BlockStyle::HhCx,
    };

    pub fn all() -> [Self; 8] {
        let mut out = [Self::LINEAR_FIRST; 8];
        let mut k = 0;
        for connectivity in [Connectivity::Linear, Connectivity::Full] {
            for depth_pairs in [PairDepth::FirstOnly, PairDepth::All] {
                for style in [BlockStyle::HhCx, BlockStyle::Bell] {
                    out[k] = Self { connectivity, depth_pairs, style };
                    k += 1;
                }
            }
        }
        out
    }

    /// Short label such as `(linear, 1)` or `(full, all, Bell)`.
    pub fn label(&self) -> String {
        let c = match self.connectivity {
            Connectivity::Linear => "linear",
            Connectivity::Full => "full",
        };
        let d = match self.depth_pairs {
            PairDepth::FirstOnly => "1",
            PairDepth::All => "all",
        };
        match self.style {
            BlockStyle::HhCx => format!("({c}, {d})"),
            BlockStyle::Bell => format!("({c}, {d}, Bell)"),
        }
    }
}

/// Register pairs in gate order: the linear chain first, then the remaining
/// pairs lexicographically (for three registers: AB, BC, AC).
fn register_pairs(n_registers: usize, connectivity: Connectivity) -> Vec<(usize, usize)> {
    let mut pairs: Vec<_> = (1..n_registers).map(|r| (r - 1, r)).collect();
    if connectivity == Connectivity::Full {
        for a in 0..n_registers {
            for b in a + 2..n_registers {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

fn correlation_gates(
    regs: &[QubitRange],
    qubits_per_register: usize,
    choice: CorrelationBlockChoice,
) -> Vec<Gate> {
    let pairs = register_pairs(regs.len(), choice.connectivity);
    let depth = match choice.depth_pairs {
        PairDepth::FirstOnly => 1,
        PairDepth::All => qubits_per_register,
    };
    let q = |r: usize, i: usize| regs[r].qubit(i);
    let mut gates = Vec::new();
    match choice.style {
        BlockStyle::HhCx => {
            for &(a, b) in &pairs {
                for i in 0..depth {
                    let (qa, qb) = (q(a, i), q(b, i));
                    gates.push(Gate::H { target: qa });
                    gates.push(Gate::H { target: qb });
                    gates.push(Gate::Cnot { control: qa, target: qb });
                }
            }
        }
        BlockStyle::Bell => {
            for i in 0..depth {
                gates.push(Gate::H { target: q(0, i) });
                for &(a, b) in &pairs {
                    gates.push(Gate::Cnot { control: q(a, i), target: q(b, i) });
                }
            }
        }
    }
    gates
}

/// The fixed entangler between `n_registers` registers. Has no parameters.
pub fn build_correlation_block(
    n_registers: usize,
    qubits_per_register: usize,
    choice: CorrelationBlockChoice,
) -> Result<CircuitSpec> {
    if n_registers < 2 {
        return Err(Error::Config("a correlation block needs at least two registers".into()));
    }
    if qubits_per_register == 0 {
        return Err(Error::Config("registers need at least one qubit".into()));
    }
    let regs = registers(n_registers, qubits_per_register);
    let gates = correlation_gates(&regs, qubits_per_register, choice);
    CircuitSpec::new(n_registers * qubits_per_register, gates, regs)
}

/// `n_repetitions` of [correlation block, per-register `RY` layer + CNOT
/// chain], then a closing `RY` layer. Parameter count is `(n_repetitions + 1)·D·n`.
pub fn build_multivariate(
    n_registers: usize,
    qubits_per_register: usize,
    n_repetitions: usize,
    choice: CorrelationBlockChoice,
) -> Result<CircuitSpec> {
    if n_registers < 2 {
        return Err(Error::Config("a multivariate model needs at least two registers".into()));
    }
    if qubits_per_register == 0 {
        return Err(Error::Config("registers need at least one qubit".into()));
    }
    let regs = registers(n_registers, qubits_per_register);
    let n_qubits = n_registers * qubits_per_register;
    let block = correlation_gates(&regs, qubits_per_register, choice);
    let mut b = Builder::default();
    for _ in 0..n_repetitions {
        b.gates.extend_from_slice(&block);
        for r in &regs {
            b.ry_layer(r.start..r.end());
            b.cnot_chain(*r);
        }
    }
    b.ry_layer(0..n_qubits);
    Ok(b.finish(n_qubits, regs))
}

/// Feature map `⊗ RY(X_j)` on data slots, followed by the hardware-efficient
/// ansatz with `RX` layers.
pub fn build_conditional(n_qubits: usize, n_layers: usize) -> Result<CircuitSpec> {
    let trainable = build_hardware_efficient(n_qubits, n_layers, true)?;
    let gates = (0..n_qubits)
        .map(|j| Gate::Ry { target: j, angle: AngleRef::Data(j) })
        .collect();
    let feature_map = CircuitSpec::new(n_qubits, gates, single_register(n_qubits))?;
    feature_map.then(&trainable)
}

/// `arcsin((e_in − e_min)/(e_max − e_min))`, in `[0, π/2]`.
pub fn encode_condition(e_in: f64, e_min: f64, e_max: f64) -> Result<f64> {
    if !(e_min < e_max) {
        return Err(Error::Config(format!("empty condition range [{e_min}, {e_max}]")));
    }
    if !(e_min..=e_max).contains(&e_in) {
        return Err(Error::OutOfRange { value: e_in, lower: e_min, upper: e_max });
    }
    let x = (e_in - e_min) / (e_max - e_min);
    Ok(if x >= 1.0 { FRAC_PI_2 } else { libm::asin(x) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn parameter_counts() {
        assert_eq!(build_hardware_efficient(3, 4, true).unwrap().n_parameters(), 27);
        assert_eq!(build_hardware_efficient(4, 0, true).unwrap().n_parameters(), 4);
        assert_eq!(build_hardware_efficient(3, 1, false).unwrap().n_parameters(), 6);
        assert_eq!(build_1d_rzz_ansatz(4).unwrap().n_parameters(), 18);
        assert_eq!(build_1d_rzz_ansatz(2).unwrap().n_parameters(), 7);
        let c = CorrelationBlockChoice::LINEAR_FIRST;
        assert_eq!(build_multivariate(3, 3, 4, c).unwrap().n_parameters(), 45);
        assert_eq!(build_multivariate(2, 1, 0, c).unwrap().n_parameters(), 2);
        assert_eq!(build_multivariate(2, 2, 1, c).unwrap().n_parameters(), 8);
        let cond = build_conditional(3, 4).unwrap();
        assert_eq!((cond.n_parameters(), cond.n_data_slots()), (27, 3));
        let cond = build_conditional(1, 0).unwrap();
        assert_eq!((cond.n_parameters(), cond.n_data_slots()), (1, 1));
    }

    #[test]
    fn count_formulas_on_a_grid() {
        for n in 1..6 {
            for layers in 0..4 {
                for rx in [false, true] {
                    let c = build_hardware_efficient(n, layers, rx).unwrap();
                    assert_eq!(c.n_parameters(), layers * n * (1 + rx as usize) + n);
                }
                let c = build_conditional(n, layers).unwrap();
                assert_eq!(c.n_parameters(), layers * n * 2 + n);
                assert_eq!(c.n_data_slots(), n);
            }
            if n >= 2 {
                assert_eq!(build_1d_rzz_ansatz(n).unwrap().n_parameters(), 3 * n + n * (n - 1) / 2);
            }
        }
        for d in 2..4 {
            for n in 1..4 {
                for reps in 0..3 {
                    for choice in CorrelationBlockChoice::all() {
                        let c = build_multivariate(d, n, reps, choice).unwrap();
                        assert_eq!(c.n_parameters(), reps * d * n + d * n);
                        let block = build_correlation_block(d, n, choice).unwrap();
                        assert_eq!(block.n_parameters(), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn eight_distinct_choices() {
        let all = CorrelationBlockChoice::all();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert_ne!(a, b);
                assert_ne!(a.label(), b.label());
            }
        }
        assert_eq!(all[0].label(), "(linear, 1)");
    }

    fn ghz_check(n_registers: usize) {
        let choice = CorrelationBlockChoice {
            connectivity: Connectivity::Linear,
            depth_pairs: PairDepth::FirstOnly,
            style: BlockStyle::Bell,
        };
        let c = build_correlation_block(n_registers, 1, choice).unwrap();
        let p = c.run(&[], None).unwrap().probabilities();
        let last = (1 << n_registers) - 1;
        for (i, &x) in p.probs().iter().enumerate() {
            let expected = if i == 0 || i == last { 0.5 } else { 0.0 };
            assert!((x - expected).abs() < 1e-10, "index {i}: {x}");
        }
    }

    #[test]
    fn bell_and_ghz() {
        ghz_check(2);
        ghz_check(3);
        ghz_check(4);
    }

    #[test]
    fn full_pair_order() {
        assert_eq!(register_pairs(3, Connectivity::Full), vec![(0, 1), (1, 2), (0, 2)]);
        assert_eq!(register_pairs(3, Connectivity::Linear), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn slot_order_of_rzz_ansatz() {
        let c = build_1d_rzz_ansatz(4).unwrap();
        assert_eq!(c.slot_kind(0), Some(GateKind::Ry));
        assert_eq!(c.slot_kind(4), Some(GateKind::Rx));
        assert_eq!(c.slot_kind(8), Some(GateKind::Rzz));
        assert_eq!(c.slot_kind(13), Some(GateKind::Rzz));
        assert_eq!(c.slot_kind(14), Some(GateKind::Ry));
        assert!(c.gates().contains(&Gate::Rzz { qubits: [0, 1], angle: AngleRef::Trainable(8) }));
        assert!(c.gates().contains(&Gate::Rzz { qubits: [2, 3], angle: AngleRef::Trainable(13) }));
    }

    #[test]
    fn zero_angles_give_zero_state() {
        let c = build_1d_rzz_ansatz(4).unwrap();
        let p = c.run(&[0.0; 18], None).unwrap().probabilities();
        assert!((p.probs()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_with_zero_data_matches_plain() {
        let plain = build_hardware_efficient(3, 2, true).unwrap();
        let cond = build_conditional(3, 2).unwrap();
        let theta: Vec<f64> = (0..plain.n_parameters()).map(|i| 0.1 * i as f64 - 0.7).collect();
        let a = plain.run(&theta, None).unwrap().probabilities();
        let b = cond.run(&theta, Some(&[0.0; 3])).unwrap().probabilities();
        assert_eq!(a.probs(), b.probs());
    }

    #[test]
    fn run_checks_counts() {
        let c = build_conditional(2, 1).unwrap();
        assert_eq!(
            c.run(&[0.0; 3], Some(&[0.0; 2])),
            Err(Error::ParameterCount { expected: 6, actual: 3 })
        );
        assert_eq!(
            c.run(&[0.0; 6], None),
            Err(Error::DataAngleCount { expected: 2, actual: 0 })
        );
        let empty = CircuitSpec::new(2, vec![], single_register(2)).unwrap();
        let p = empty.run(&[], None).unwrap().probabilities();
        assert_eq!(p.probs()[0], 1.0);
        let single = build_hardware_efficient(1, 0, false).unwrap();
        let s = single.run(&[PI / 2.0], None).unwrap();
        assert!((s.amplitudes()[0].re - libm::cos(PI / 4.0)).abs() < 1e-12);
        assert!((s.amplitudes()[1].re - libm::sin(PI / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_slots() {
        let regs = single_register(2);
        let dup = vec![
            Gate::Ry { target: 0, angle: AngleRef::Trainable(0) },
            Gate::Ry { target: 1, angle: AngleRef::Trainable(0) },
        ];
        assert!(CircuitSpec::new(2, dup, regs.clone()).is_err());
        let gap = vec![Gate::Ry { target: 0, angle: AngleRef::Trainable(1) }];
        assert!(CircuitSpec::new(2, gap, regs.clone()).is_err());
        let oob = vec![Gate::H { target: 3 }];
        assert!(CircuitSpec::new(2, oob, regs).is_err());
        assert!(CircuitSpec::new(2, vec![], vec![QubitRange { start: 0, len: 1 }]).is_err());
    }

    #[test]
    fn encode_condition_values() {
        assert_eq!(encode_condition(50.0, 50.0, 200.0).unwrap(), 0.0);
        assert!((encode_condition(200.0, 50.0, 200.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((encode_condition(125.0, 50.0, 200.0).unwrap() - PI / 6.0).abs() < 1e-12);
        assert!(matches!(encode_condition(201.0, 50.0, 200.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(encode_condition(49.0, 50.0, 200.0), Err(Error::OutOfRange { .. })));
        assert!(encode_condition(60.0, 70.0, 70.0).is_err());
    }
}
