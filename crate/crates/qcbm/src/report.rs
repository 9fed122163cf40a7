//! The `report.json` document and report comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use qcbm_core::optimize::{Phase, TrainTrace};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Per-epoch metrics without wall time, so reruns serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub val_loss: f64,
    pub tv: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub initial_val_loss: f64,
    pub initial_tv: f64,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub handoff: Option<(f64, f64)>,
    pub epochs: Vec<EpochSummary>,
}

impl From<&TrainTrace> for TraceSummary {
    fn from(t: &TrainTrace) -> Self {
        TraceSummary {
            initial_val_loss: t.initial_val_loss,
            initial_tv: t.initial_tv,
            best_epoch: t.best_epoch,
            best_val_loss: t.best_val_loss,
            handoff: t.handoff,
            epochs: t
                .epochs
                .iter()
                .map(|e| EpochSummary {
                    epoch: e.epoch,
                    phase: e.phase,
                    train_loss: e.train_loss,
                    val_loss: e.val_loss,
                    tv: e.tv,
                    lr: e.lr,
                    grad_norm: e.grad_norm,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub kind: String,
    pub n_parameters: usize,
    /// QCBM training trace; the GMMD records its mean batch loss in `loss_curve`.
    pub trace: Option<TraceSummary>,
    pub loss_curve: Vec<f64>,
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub features: Vec<String>,
    /// The configured ground-truth matrix of the generator, if synthetic.
    pub configured: Option<Vec<Vec<f64>>>,
    /// Pearson matrix of the continuous test events.
    pub test_data: Vec<Vec<f64>>,
    /// Pearson matrix of generated samples, per model.
    pub generated: BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: f64,
    pub split: String,
    pub tv: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Flat metric table; every entry is lower-is-better.
    pub metrics: BTreeMap<String, f64>,
    pub models: Vec<ModelSummary>,
    pub correlations: Option<CorrelationTable>,
    pub per_condition: Vec<ConditionRow>,
    pub histograms: Vec<String>,
}

/// Run facts that change between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_seconds: u64,
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub regression: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub experiment: String,
    pub tolerance: f64,
    /// Metrics whose values differ, sorted by name.
    pub deltas: Vec<MetricDelta>,
}

impl Comparison {
    pub fn has_regression(&self) -> bool {
        self.deltas.iter().any(|d| d.regression)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.deltas.is_empty() {
            let _ = writeln!(out, "{}: no metric differences", self.experiment);
            return out;
        }
        let _ = writeln!(out, "{} (tolerance {}):", self.experiment, self.tolerance);
        for d in &self.deltas {
            let flag = if d.regression { "  REGRESSION" } else { "" };
            let _ = writeln!(out, "  {:<40} {:>12.6} -> {:>12.6}  ({:+.6}){flag}", d.metric, d.a, d.b, d.delta);
        }
        out
    }
}

/// Per-metric deltas `b − a`. A metric regresses when it grows by more than
/// `tolerance`; a missing metric or a different experiment is an error.
pub fn compare_report(a: &Report, b: &Report, tolerance: f64) -> Result<Comparison, CliError> {
    if a.experiment != b.experiment {
        return Err(CliError::Mismatch(format!("experiment {} vs {}", a.experiment, b.experiment)));
    }
    let missing: Vec<&String> = a
        .metrics
        .keys()
        .filter(|k| !b.metrics.contains_key(*k))
        .chain(b.metrics.keys().filter(|k| !a.metrics.contains_key(*k)))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Mismatch(format!("metrics present in only one report: {missing:?}")));
    }
    let deltas = a
        .metrics
        .iter()
        .filter_map(|(k, &va)| {
            let vb = b.metrics[k];
            if va.to_bits() == vb.to_bits() {
                return None;
            }
            let delta = vb - va;
            Some(MetricDelta { metric: k.clone(), a: va, b: vb, delta, regression: delta > tolerance || vb.is_nan() })
        })
        .collect();
    Ok(Comparison { experiment: a.experiment.clone(), tolerance, deltas })
}

/// Human-readable summary for `qcbm report`.
pub fn render_report(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} (seed {}, version {})", r.experiment, r.config.seed, r.version);
    let _ = writeln!(out, "metrics:");
    for (k, v) in &r.metrics {
        let _ = writeln!(out, "  {k:<40} {v:.6}");
    }
    if !r.models.is_empty() {
        let _ = writeln!(out, "models:");
        for m in &r.models {
            let best = m.trace.as_ref().map(|t| format!(", best val MMD {:.6}", t.best_val_loss)).unwrap_or_default();
            let _ = writeln!(out, "  {} [{}] {} parameters{best}", m.name, m.kind, m.n_parameters);
        }
    }
    if let Some(c) = &r.correlations {
        let _ = writeln!(out, "correlations ({}):", c.features.join(", "));
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let row = |m: &Vec<Vec<f64>>| {
            pairs.iter().filter(|(i, j)| *i < m.len() && *j < m.len()).map(|&(i, j)| format!("{:+.3}", m[i][j])).collect::<Vec<_>>().join("  ")
        };
        if let Some(cfg) = &c.configured {
            let _ = writeln!(out, "  {:<12} {}", "configured", row(cfg));
        }
        let _ = writeln!(out, "  {:<12} {}", "test data", row(&c.test_data));
        for (name, m) in &c.generated {
            let _ = writeln!(out, "  {:<12} {}", name, row(m));
        }
    }
    if !r.per_condition.is_empty() {
        let _ = writeln!(out, "per condition TV:");
        for c in &r.per_condition {
            let tvs: Vec<String> = c.tv.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
            let _ = writeln!(out, "  {:>6.1} GeV ({:<5}) {}", c.condition, c.split, tvs.join("  "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, ExperimentKind};

    fn report(metrics: &[(&str, f64)]) -> Report {
        Report {
            experiment: "exp-1d".into(),
            version: "test".into(),
            config: ExperimentConfig::defaults(ExperimentKind::OneDim, 0),
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            models: vec![],
            correlations: None,
            per_condition: vec![],
            histograms: vec![],
        }
    }

    #[test]
    fn identical_reports_have_no_diff() {
        let a = report(&[("qcbm.tv.energy", 0.05)]);
        let c = compare_report(&a, &a.clone(), 0.05).unwrap();
        assert!(c.deltas.is_empty());
        assert!(!c.has_regression());
    }

    #[test]
    fn regression_beyond_tolerance() {
        let a = report(&[("qcbm.tv.energy", 0.05), ("qcbm.val_mmd", 0.01)]);
        let b = report(&[("qcbm.tv.energy", 0.25), ("qcbm.val_mmd", 0.005)]);
        let c = compare_report(&a, &b, 0.05).unwrap();
        assert!(c.has_regression());
        assert_eq!(c.deltas.len(), 2);
        assert!(c.deltas.iter().find(|d| d.metric == "qcbm.val_mmd").is_some_and(|d| !d.regression));
        assert!(!compare_report(&b, &a, 0.05).unwrap().has_regression());
    }

    #[test]
    fn structural_mismatch() {
        let a = report(&[("qcbm.tv.energy", 0.05), ("gmmd.tv.energy", 0.03)]);
        let b = report(&[("qcbm.tv.energy", 0.05)]);
        assert!(matches!(compare_report(&a, &b, 0.05), Err(CliError::Mismatch(_))));
        let mut other = a.clone();
        other.experiment = "exp-multi".into();
        assert!(matches!(compare_report(&a, &other, 0.05), Err(CliError::Mismatch(_))));
    }
}
