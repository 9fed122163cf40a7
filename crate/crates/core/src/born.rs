//! The Born machine: a circuit, its parameters, and how to read its output.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::circuits::{encode_condition, CircuitSpec, QubitRange};
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::sim::GateKind;

/// Affine range of the conditioning energy, mapped to `[0, π/2]` by arcsine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEncoder {
    pub e_min: f64,
    pub e_max: f64,
}

impl ConditionEncoder {
    pub fn encode(&self, e_in: f64) -> Result<f64> {
        encode_condition(e_in, self.e_min, self.e_max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawModel {
    circuit: CircuitSpec,
    theta: Vec<f64>,
    features: Vec<String>,
    condition_encoder: Option<ConditionEncoder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct BornModel {
    circuit: CircuitSpec,
    theta: Vec<f64>,
    features: Vec<String>,
    condition_encoder: Option<ConditionEncoder>,
}

impl TryFrom<RawModel> for BornModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let mut m = BornModel::new(raw.circuit, raw.theta, raw.features)?;
        if let Some(enc) = raw.condition_encoder {
            m = m.with_condition_encoder(enc)?;
        }
        Ok(m)
    }
}

impl From<BornModel> for RawModel {
    fn from(m: BornModel) -> Self {
        RawModel {
            circuit: m.circuit,
            theta: m.theta,
            features: m.features,
            condition_encoder: m.condition_encoder,
        }
    }
}

/// Parameter-shift rule for a trainable slot: `∂p/∂θ = scale · (p(θ+s) − p(θ−s))`.
///
/// `RY`/`RX` are `exp(-iθP/2)` and use `s = π/2, scale = 1/2`. `RZZ` is
/// `exp(-iθ Z⊗Z)` whose generator has twice the spectral gap, so `s = π/4, scale = 1`.
pub fn shift_rule(kind: GateKind) -> (f64, f64) {
    match kind {
        GateKind::Rzz => (FRAC_PI_4, 1.0),
        _ => (FRAC_PI_2, 0.5),
    }
}

impl BornModel {
    /// One feature name per circuit register, in register order.
    pub fn new(circuit: CircuitSpec, theta: Vec<f64>, features: Vec<String>) -> Result<Self> {
        if theta.len() != circuit.n_parameters() {
            return Err(Error::ParameterCount {
                expected: circuit.n_parameters(),
                actual: theta.len(),
            });
        }
        if features.len() != circuit.registers().len() {
            return Err(Error::DimensionMismatch {
                left: features.len(),
                right: circuit.registers().len(),
            });
        }
        Ok(Self { circuit, theta, features, condition_encoder: None })
    }

    /// Names registers `x0, x1, …`.
    pub fn with_default_features(circuit: CircuitSpec, theta: Vec<f64>) -> Result<Self> {
        let features = (0..circuit.registers().len()).map(|i| format!("x{i}")).collect();
        Self::new(circuit, theta, features)
    }

    pub fn with_condition_encoder(mut self, encoder: ConditionEncoder) -> Result<Self> {
        if self.circuit.n_data_slots() == 0 {
            return Err(Error::Condition("circuit has no feature map".into()));
        }
        if !(encoder.e_min < encoder.e_max) {
            return Err(Error::Config(format!(
                "empty condition range [{}, {}]",
                encoder.e_min, encoder.e_max
            )));
        }
        self.condition_encoder = Some(encoder);
        Ok(self)
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::ParameterCount { expected: self.theta.len(), actual: theta.len() });
        }
        self.theta = theta;
        Ok(())
    }

    pub fn n_parameters(&self) -> usize {
        self.theta.len()
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn registers(&self) -> impl Iterator<Item = (&str, QubitRange)> {
        self.features.iter().map(String::as_str).zip(self.circuit.registers().iter().copied())
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn condition_encoder(&self) -> Option<ConditionEncoder> {
        self.condition_encoder
    }

    pub fn register_bits(&self) -> Vec<usize> {
        self.circuit.register_bits()
    }

    pub(crate) fn data_angles(&self, condition: Option<f64>) -> Result<Option<Vec<f64>>> {
        match (self.condition_encoder, condition) {
            (Some(enc), Some(e)) => {
                Ok(Some(vec![enc.encode(e)?; self.circuit.n_data_slots()]))
            }
            (Some(_), None) => Err(Error::Condition("model is conditional".into())),
            (None, Some(_)) => Err(Error::Condition("model takes no condition".into())),
            (None, None) => Ok(None),
        }
    }

    /// Distribution for an arbitrary parameter vector, leaving the model untouched.
    pub fn distribution_at(&self, theta: &[f64], condition: Option<f64>) -> Result<DiscreteDistribution> {
        let data = self.data_angles(condition)?;
        let state = self.circuit.run(theta, data.as_deref())?;
        Ok(state.probabilities_with_layout(self.register_bits()).with_condition(condition))
    }

    /// Joint distribution over bin tuples; basis states split by register.
    pub fn model_distribution(&self, condition: Option<f64>) -> Result<DiscreteDistribution> {
        self.distribution_at(&self.theta, condition)
    }

    /// Distributions at `θ ± s·ê_i` with the slot's shift `s` (see [`shift_rule`]).
    pub fn shifted_distributions(
        &self,
        param_index: usize,
        condition: Option<f64>,
    ) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
        let kind = self.circuit.slot_kind(param_index).ok_or(Error::IndexOutOfRange {
            index: param_index,
            len: self.n_parameters(),
        })?;
        let (shift, _) = shift_rule(kind);
        let mut theta = self.theta.clone();
        theta[param_index] += shift;
        let plus = self.distribution_at(&theta, condition)?;
        theta[param_index] = self.theta[param_index] - shift;
        let minus = self.distribution_at(&theta, condition)?;
        Ok((plus, minus))
    }
}

/// Marginal of one named feature of a model's joint distribution.
pub fn marginal(model: &BornModel, dist: &DiscreteDistribution, feature: &str) -> Result<DiscreteDistribution> {
    dist.marginal(model.feature_index(feature)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{build_conditional, build_correlation_block, build_hardware_efficient};
    use crate::circuits::{BlockStyle, Connectivity, CorrelationBlockChoice, PairDepth};

    #[test]
    fn zero_theta_point_mass() {
        let c = build_hardware_efficient(3, 2, true).unwrap();
        let n = c.n_parameters();
        let m = BornModel::with_default_features(c, vec![0.0; n]).unwrap();
        let p = m.model_distribution(None).unwrap();
        assert!((p.probs()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_joint_over_two_features() {
        let choice = CorrelationBlockChoice {
            connectivity: Connectivity::Linear,
            depth_pairs: PairDepth::FirstOnly,
            style: BlockStyle::Bell,
        };
        let c = build_correlation_block(2, 1, choice).unwrap();
        let m = BornModel::new(c, vec![], vec!["a".into(), "b".into()]).unwrap();
        let p = m.model_distribution(None).unwrap();
        assert_eq!(p.register_bits(), &[1, 1]);
        assert!((p.probs()[0] - 0.5).abs() < 1e-12);
        assert!((p.probs()[3] - 0.5).abs() < 1e-12);
        for f in ["a", "b"] {
            let mg = marginal(&m, &p, f).unwrap();
            assert!((mg.probs()[0] - 0.5).abs() < 1e-12);
            assert!((mg.probs()[1] - 0.5).abs() < 1e-12);
        }
        assert!(marginal(&m, &p, "c").is_err());
    }

    #[test]
    fn condition_handling() {
        let c = build_conditional(3, 1).unwrap();
        let theta: Vec<f64> = (0..c.n_parameters()).map(|i| 0.3 * i as f64).collect();
        let plain = BornModel::with_default_features(c.clone(), theta.clone()).unwrap();
        assert!(plain.model_distribution(None).is_err());
        let enc = ConditionEncoder { e_min: 50.0, e_max: 200.0 };
        let m = plain.clone().with_condition_encoder(enc).unwrap();
        assert!(m.model_distribution(None).is_err());
        assert!(m.model_distribution(Some(250.0)).is_err());
        let at_min = m.model_distribution(Some(50.0)).unwrap();
        let hw = build_hardware_efficient(3, 1, true).unwrap();
        let reference = BornModel::with_default_features(hw, theta).unwrap();
        assert_eq!(at_min.probs(), reference.model_distribution(None).unwrap().probs());
        assert_eq!(at_min.condition(), Some(50.0));
    }

    #[test]
    fn shifted_single_qubit() {
        let c = build_hardware_efficient(1, 0, false).unwrap();
        let m = BornModel::with_default_features(c, vec![0.0]).unwrap();
        let (plus, minus) = m.shifted_distributions(0, None).unwrap();
        assert!((plus.probs()[1] - 0.5).abs() < 1e-12);
        assert!((minus.probs()[1] - 0.5).abs() < 1e-12);
        assert!((plus.total() - 1.0).abs() < 1e-12);
        assert_eq!(m.theta(), &[0.0]);
        assert!(m.shifted_distributions(1, None).is_err());
    }

    #[test]
    fn checkpoint_round_trip_validates() {
        let c = build_conditional(2, 1).unwrap();
        let m = BornModel::with_default_features(c, vec![0.25; 6])
            .unwrap()
            .with_condition_encoder(ConditionEncoder { e_min: 50.0, e_max: 200.0 })
            .unwrap();
        let raw: RawModel = m.clone().into();
        let back = BornModel::try_from(raw.clone()).unwrap();
        assert_eq!(back, m);
        let mut broken = raw;
        broken.theta.pop();
        assert!(BornModel::try_from(broken).is_err());
    }
}
