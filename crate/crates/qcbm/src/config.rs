//! Experiment configuration: per-experiment defaults, file overrides, flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qcbm_core::baseline::GmmdConfig;
use qcbm_core::circuits::CorrelationBlockChoice;
use qcbm_core::data::{reference_correlation, CONDITION_ENERGIES};
use qcbm_core::noise::NoiseConfig;
use qcbm_core::optimize::{InitScheme, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "exp-1d")]
    OneDim,
    #[serde(rename = "exp-multi")]
    Multi,
    #[serde(rename = "exp-cond")]
    Conditional,
    #[serde(rename = "exp-blocks")]
    Blocks,
    #[serde(rename = "exp-noise")]
    Noise,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [Self::OneDim, Self::Multi, Self::Conditional, Self::Blocks, Self::Noise];

    pub fn name(self) -> &'static str {
        match self {
            Self::OneDim => "exp-1d",
            Self::Multi => "exp-multi",
            Self::Conditional => "exp-cond",
            Self::Blocks => "exp-blocks",
            Self::Noise => "exp-noise",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        /// Events drawn at each incoming energy before the train/test split.
        events_per_condition: usize,
        correlation: [[f64; 3]; 3],
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmdSettings {
    /// Noise inputs; the conditional generator takes the condition as one extra input.
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub train: GmmdConfig,
    /// Generated samples per sampling repetition when comparing histograms.
    pub n_samples: usize,
}

/// Evaluation pipelines of exp-noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEvalSettings {
    /// Which trained model is evaluated: `exp-1d` or `exp-multi`.
    pub base: ExperimentKind,
    pub noise: NoiseConfig,
    /// Measurement shots per evaluation.
    pub shots: usize,
    /// Calibration shots per basis state for the confusion matrix.
    pub calibration_shots: usize,
    /// Independent shot draws; the report averages over them.
    pub trials: usize,
}

/// Coordinates the QCBM kernel measures distances in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpace {
    /// Bin indices, one axis per feature.
    #[default]
    BinIndex,
    /// Bin centers in standardized feature units.
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub data: DataSource,
    /// Incoming energy of single-condition experiments.
    pub condition: f64,
    /// Energies the conditional experiment trains and tests on.
    pub conditions: Vec<f64>,
    pub qubits_per_feature: usize,
    /// Repetitions of the layered block (multivariate and conditional circuits).
    pub n_layers: usize,
    pub block: CorrelationBlockChoice,
    pub init: InitScheme,
    pub kernel_space: KernelSpace,
    pub train: TrainConfig,
    pub gmmd: Option<GmmdSettings>,
    pub noise_eval: Option<NoiseEvalSettings>,
    /// Sampling repetitions behind the histogram error bars.
    pub sampling_repetitions: usize,
    pub output_dir: PathBuf,
}

fn synthetic(events_per_condition: usize) -> DataSource {
    DataSource::Synthetic { events_per_condition, correlation: reference_correlation() }
}

fn gmmd(hidden: Vec<usize>, epochs: usize, seed: u64) -> GmmdSettings {
    GmmdSettings {
        latent_dim: 15,
        hidden,
        train: GmmdConfig { epochs, seed: derive_seed(seed, "gmmd.train"), ..GmmdConfig::default() },
        n_samples: 5120,
    }
}

/// Seed of the random stream `label`, derived from the master seed
/// (FNV-1a of the label, mixed by splitmix64).
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    /// Defaults of an experiment, before any file or flag overrides.
    pub fn defaults(kind: ExperimentKind, seed: u64) -> Self {
        let base = ExperimentConfig {
            experiment: kind,
            seed,
            data: synthetic(10_240),
            condition: 50.0,
            conditions: CONDITION_ENERGIES.to_vec(),
            qubits_per_feature: 4,
            n_layers: 0,
            block: CorrelationBlockChoice::LINEAR_FIRST,
            init: InitScheme::Uniform0To2Pi,
            kernel_space: KernelSpace::BinIndex,
            train: TrainConfig { seed: derive_seed(seed, "qcbm.train"), ..TrainConfig::default() },
            gmmd: None,
            noise_eval: None,
            sampling_repetitions: 10,
            output_dir: PathBuf::from(kind.name()),
        };
        match kind {
            ExperimentKind::OneDim => ExperimentConfig { gmmd: Some(gmmd(vec![64, 128, 64, 16], 100, seed)), ..base },
            ExperimentKind::Multi | ExperimentKind::Blocks => ExperimentConfig {
                condition: 125.0,
                qubits_per_feature: 3,
                n_layers: 4,
                train: TrainConfig { max_epochs: 100, ..base.train.clone() },
                gmmd: (kind == ExperimentKind::Multi).then(|| gmmd(vec![128, 256, 128], 50, seed)),
                ..base
            },
            ExperimentKind::Conditional => ExperimentConfig {
                qubits_per_feature: 3,
                n_layers: 4,
                train: TrainConfig { max_epochs: 30, held_out_conditions: vec![125.0], ..base.train.clone() },
                gmmd: Some(gmmd(vec![8, 8], 100, seed)),
                ..base
            },
            ExperimentKind::Noise => ExperimentConfig {
                condition: 125.0,
                qubits_per_feature: 3,
                n_layers: 4,
                train: TrainConfig { max_epochs: 100, ..base.train.clone() },
                noise_eval: Some(NoiseEvalSettings {
                    base: ExperimentKind::Multi,
                    noise: NoiseConfig { seed: derive_seed(seed, "noise"), ..NoiseConfig::default() },
                    shots: 100_000,
                    calibration_shots: 8192,
                    trials: 10,
                }),
                gmmd: None,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Validation(format!("{field}: {msg}")));
        if let DataSource::Csv { path } = &self.data {
            if !path.exists() {
                return bad("data.path", &format!("{} does not exist", path.display()));
            }
        }
        if let DataSource::Synthetic { events_per_condition, .. } = &self.data {
            if *events_per_condition < 4 {
                return bad("data.events_per_condition", "need at least 4 events");
            }
        }
        if self.qubits_per_feature == 0 || self.qubits_per_feature > 6 {
            return bad("qubits_per_feature", "must be in 1..=6");
        }
        if self.experiment == ExperimentKind::OneDim && self.qubits_per_feature < 2 {
            return bad("qubits_per_feature", "the RZZ ansatz needs at least 2 qubits");
        }
        if matches!(self.experiment, ExperimentKind::Multi | ExperimentKind::Blocks) && self.n_layers == 0 {
            return bad("n_layers", "the multivariate circuit needs at least one repetition");
        }
        if self.experiment == ExperimentKind::Conditional && self.n_layers == 0 {
            return bad("n_layers", "the conditional circuit needs at least one layer");
        }
        if self.sampling_repetitions < 2 {
            return bad("sampling_repetitions", "need at least 2 repetitions for a spread");
        }
        if self.experiment == ExperimentKind::Conditional {
            if self.conditions.len() < 2 {
                return bad("conditions", "need at least two energies");
            }
            let trained = self.conditions.iter().filter(|c| !self.train.held_out_conditions.contains(c)).count();
            if trained == 0 {
                return bad("train.held_out_conditions", "every energy is held out");
            }
        }
        if self.experiment == ExperimentKind::Noise && self.noise_eval.is_none() {
            return bad("noise_eval", "exp-noise needs noise settings");
        }
        if let Some(n) = &self.noise_eval {
            if !matches!(n.base, ExperimentKind::OneDim | ExperimentKind::Multi) {
                return bad("noise_eval.base", "must be exp-1d or exp-multi");
            }
            n.noise.validate().map_err(|e| CliError::Validation(format!("noise_eval.noise: {e}")))?;
            if n.shots == 0 || n.calibration_shots == 0 || n.trials == 0 {
                return bad("noise_eval", "shots, calibration_shots and trials must be positive");
            }
        }
        if let Some(g) = &self.gmmd {
            g.train.validate().map_err(|e| CliError::Validation(format!("gmmd.train: {e}")))?;
            if g.latent_dim == 0 || g.hidden.contains(&0) || g.n_samples == 0 {
                return bad("gmmd", "sizes must be positive");
            }
        }
        self.train.validate().map_err(|e| CliError::Validation(format!("train: {e}")))
    }
}

/// Parameters of `qcbm synth-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub events_per_condition: usize,
    pub conditions: Vec<f64>,
    pub correlation: [[f64; 3]; 3],
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            events_per_condition: 10_240,
            conditions: CONDITION_ENERGIES.to_vec(),
            correlation: reference_correlation(),
            seed: 0,
        }
    }
}

pub fn load_synth_params(path: &Path) -> Result<SynthParams, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Validation(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if v.is_object() && slot.is_object() && same_variant(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Tagged enums (e.g. `data.source`) are replaced, not merged, when the
/// patch names a different variant.
fn same_variant(base: &Value, patch: &Value) -> bool {
    match (base.get("source"), patch.get("source")) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    }
}

/// A `path.to.field=value` override; the value is parsed as JSON, falling
/// back to a plain string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (path, raw) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
        if path.is_empty() {
            return Err(format!("empty key in `{s}`"));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Override { path: path.split('.').map(str::to_string).collect(), value })
    }
}

impl Override {
    fn as_patch(&self) -> Value {
        self.path.iter().rev().fold(self.value.clone(), |acc, key| {
            let mut m = Map::new();
            m.insert(key.clone(), acc);
            Value::Object(m)
        })
    }
}

/// Resolves a config document: defaults of its experiment, then the
/// document, then `overrides` in order. `seed` must come from the document
/// or an override.
pub fn resolve(document: Value, overrides: &[Override]) -> Result<ExperimentConfig, CliError> {
    let mut doc = document;
    for o in overrides {
        merge(&mut doc, o.as_patch());
    }
    let obj = doc.as_object().ok_or_else(|| CliError::Validation("config must be a JSON object".into()))?;
    let kind: ExperimentKind = obj
        .get("experiment")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Validation("experiment: missing".into()))?
        .parse()?;
    let seed = obj
        .get("seed")
        .ok_or_else(|| CliError::Validation("seed: missing (a seed is mandatory)".into()))?
        .as_u64()
        .ok_or_else(|| CliError::Validation("seed: expected an unsigned integer".into()))?;
    let mut full = serde_json::to_value(ExperimentConfig::defaults(kind, seed))
        .map_err(|e| CliError::Validation(e.to_string()))?;
    merge(&mut full, doc);
    let config: ExperimentConfig = serde_path_to_error::deserialize(full)
        .map_err(|e| CliError::Validation(format!("{}: {}", e.path(), e.inner())))?;
    config.validate()?;
    Ok(config)
}

/// Reads and resolves a config file. Relative CSV paths are taken relative
/// to the file's directory.
pub fn load_config(path: &Path, overrides: &[Override]) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if let (Some(dir), Some(Value::String(p))) = (path.parent(), doc.pointer("/data/path").cloned()) {
        if Path::new(&p).is_relative() {
            doc["data"]["path"] = Value::String(dir.join(p).display().to_string());
        }
    }
    resolve(doc, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_round_trip_through_json() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::defaults(kind, 7);
            cfg.validate().unwrap();
            let back = resolve(serde_json::to_value(&cfg).unwrap(), &[]).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn precedence_flags_file_defaults() {
        let doc = json!({"experiment": "exp-1d", "seed": 3, "train": {"max_epochs": 5}});
        let cfg = resolve(doc.clone(), &[]).unwrap();
        assert_eq!(cfg.train.max_epochs, 5);
        assert_eq!(cfg.train.batch_size, 512);
        let o: Override = "train.max_epochs=9".parse().unwrap();
        assert_eq!(resolve(doc, &[o]).unwrap().train.max_epochs, 9);
    }

    #[test]
    fn switching_data_source_drops_synthetic_fields() {
        // Validation only needs the path to exist.
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/Cargo.toml");
        let doc = json!({"experiment": "exp-1d", "seed": 1, "data": {"source": "csv", "path": path}});
        assert_eq!(resolve(doc, &[]).unwrap().data, DataSource::Csv { path: path.into() });
        let o: Override = "data.events_per_condition=100".parse().unwrap();
        let cfg = resolve(json!({"experiment": "exp-1d", "seed": 1}), &[o]).unwrap();
        assert!(matches!(cfg.data, DataSource::Synthetic { events_per_condition: 100, .. }));
    }

    #[test]
    fn seed_is_mandatory() {
        let err = resolve(json!({"experiment": "exp-1d"}), &[]).unwrap_err();
        assert!(err.to_string().contains("seed"));
        let o: Override = "seed=4".parse().unwrap();
        assert_eq!(resolve(json!({"experiment": "exp-1d"}), &[o]).unwrap().seed, 4);
    }

    #[test]
    fn errors_name_the_field() {
        let err = resolve(json!({"experiment": "exp-1d", "seed": 1, "train": {"batch_size": "big"}}), &[]).unwrap_err();
        assert!(err.to_string().starts_with("train.batch_size"), "{err}");
        let err = resolve(json!({"experiment": "exp-1d", "seed": 1, "colour": 2}), &[]).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = resolve(json!({"experiment": "exp-2d", "seed": 1}), &[]).unwrap_err();
        assert!(err.to_string().contains("exp-2d"));
        let err = resolve(json!({"experiment": "exp-1d", "seed": 1, "data": {"source": "csv", "path": "/nope.csv"}}), &[])
            .unwrap_err();
        assert!(err.to_string().starts_with("data.path"), "{err}");
    }

    #[test]
    fn derived_seeds_follow_the_master_seed() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        let a = resolve(json!({"experiment": "exp-1d", "seed": 1}), &[]).unwrap();
        let b = resolve(json!({"experiment": "exp-1d", "seed": 2}), &[]).unwrap();
        assert_ne!(a.train.seed, b.train.seed);
        let pinned = resolve(json!({"experiment": "exp-1d", "seed": 2, "train": {"seed": 5}}), &[]).unwrap();
        assert_eq!(pinned.train.seed, 5);
    }

    #[test]
    fn override_parsing() {
        let o: Override = "output_dir=out/a".parse().unwrap();
        assert_eq!(o.value, Value::String("out/a".into()));
        let o: Override = "block={\"connectivity\":\"full\",\"depth_pairs\":\"all\",\"style\":\"bell\"}".parse().unwrap();
        assert!(o.value.is_object());
        assert!("novalue".parse::<Override>().is_err());
    }
}
