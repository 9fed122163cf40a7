//! Experiment pipelines behind `qcbm run`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use qcbm_core::baseline::{train_conditional_gmmd, train_gmmd, ConditionGroup, GmmdTrace, Mlp, MlpSpec};
use qcbm_core::born::{BornModel, ConditionEncoder};
use qcbm_core::circuits::{build_1d_rzz_ansatz, build_conditional, build_multivariate, CorrelationBlockChoice};
use qcbm_core::data::{
    discretize, preprocess, select_columns, split_train_test, synthesize_dataset, BinningSpec,
    EventRecord, PreprocessParams, FEATURES,
};
use qcbm_core::dist::{split_index, DiscreteDistribution};
use qcbm_core::metrics::{pearson_correlation, total_variance};
use qcbm_core::noise::{
    apply_cnot_depolarizing, apply_readout_noise, estimate_confusion_matrix, mitigate_readout, ConfusionMatrix,
    NoiseConfig,
};
use qcbm_core::optimize::{init_parameters, train_with_clock, ConditionedTarget, TrainTrace, TrainingTarget};
use qcbm_core::sim::sample;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, DataSource, ExperimentConfig, ExperimentKind, GmmdSettings, KernelSpace};
use crate::error::CliError;
use crate::io::{load_csv, write_histogram_csv, write_json, write_rows_csv, write_trace_csv, HistogramRow};
use crate::report::{ConditionRow, CorrelationTable, ModelSummary, Report, RunMetadata, TraceSummary};

pub const VERSION: &str = env!("QCBM_BUILD_VERSION");

/// Runs `config`, writing its artifacts under `output_root/config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig, output_root: &Path) -> Result<Report, CliError> {
    config.validate()?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let out = output_root.join(&config.output_dir);
    for sub in ["", "histograms", "traces", "checkpoints"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    write_json(&out.join("config.json"), config)?;
    let mut run = Run::new(config, out.clone());
    match config.experiment {
        ExperimentKind::OneDim => run.one_dim()?,
        ExperimentKind::Multi => run.multi()?,
        ExperimentKind::Conditional => run.conditional()?,
        ExperimentKind::Blocks => run.blocks()?,
        ExperimentKind::Noise => run.noise()?,
    }
    let report = run.finish();
    write_json(&out.join("report.json"), &report)?;
    let meta = RunMetadata {
        started_unix_seconds: started,
        wall_seconds: clock.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    write_json(&out.join("metadata.json"), &meta)?;
    Ok(report)
}

/// Train and test halves, preprocessed with parameters fitted on the train half.
struct Prepared {
    train: Vec<EventRecord>,
    test: Vec<EventRecord>,
    ftrain: Vec<Vec<f64>>,
    ftest: Vec<Vec<f64>>,
    params: PreprocessParams,
}

impl Prepared {
    fn rows_at(&self, condition: f64, test: bool, columns: &[usize]) -> Vec<Vec<f64>> {
        let (events, features) = if test { (&self.test, &self.ftest) } else { (&self.train, &self.ftrain) };
        let rows: Vec<Vec<f64>> = events
            .iter()
            .zip(features)
            .filter(|(e, _)| same_energy(e.e_in, condition))
            .map(|(_, f)| f.clone())
            .collect();
        select_columns(&rows, columns)
    }
}

fn same_energy(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

fn energy_label(e: f64) -> String {
    if e.fract() == 0.0 {
        format!("{e:.0}")
    } else {
        format!("{e}").replace('.', "p")
    }
}

#[derive(Serialize)]
struct Checkpoint<'a, M: Serialize> {
    model: &'a M,
    master_seed: u64,
    seeds: BTreeMap<String, u64>,
    preprocess: &'a PreprocessParams,
    binning: &'a BinningSpec,
}

#[derive(Serialize, Deserialize)]
struct CachedConfusion {
    n_qubits: usize,
    noise: NoiseConfig,
    calibration_shots: usize,
    matrix: ConfusionMatrix,
}

/// A trained QCBM with the targets it was fitted against.
struct QcbmFit {
    model: BornModel,
    trace: TrainTrace,
    spec: BinningSpec,
    columns: Vec<usize>,
    validation: DiscreteDistribution,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    clock: Instant,
    metrics: BTreeMap<String, f64>,
    models: Vec<ModelSummary>,
    correlations: Option<CorrelationTable>,
    per_condition: Vec<ConditionRow>,
    histograms: Vec<String>,
    seeds: BTreeMap<String, u64>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ExperimentConfig, out: PathBuf) -> Self {
        Run {
            cfg,
            out,
            clock: Instant::now(),
            metrics: BTreeMap::new(),
            models: Vec::new(),
            correlations: None,
            per_condition: Vec::new(),
            histograms: Vec::new(),
            seeds: BTreeMap::new(),
        }
    }

    fn finish(self) -> Report {
        Report {
            experiment: self.cfg.experiment.name().to_string(),
            version: VERSION.to_string(),
            config: self.cfg.clone(),
            metrics: self.metrics,
            models: self.models,
            correlations: self.correlations,
            per_condition: self.per_condition,
            histograms: self.histograms,
        }
    }

    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.cfg.seed, label);
        self.seeds.insert(label.to_string(), s);
        s
    }

    fn load_events(&self, conditions: &[f64]) -> Result<Vec<EventRecord>, CliError> {
        let events = match &self.cfg.data {
            DataSource::Synthetic { events_per_condition, correlation } => {
                synthesize_dataset(*events_per_condition, conditions, correlation, derive_seed(self.cfg.seed, "data"))?
            }
            DataSource::Csv { path } => {
                let mut events = load_csv(path)?;
                events.retain(|e| conditions.iter().any(|&c| same_energy(e.e_in, c)));
                events
            }
        };
        for &c in conditions {
            let n = events.iter().filter(|e| same_energy(e.e_in, c)).count();
            if n < 2 {
                return Err(CliError::Validation(format!("data: {n} events at e_in = {c} GeV, need at least 2")));
            }
        }
        Ok(events)
    }

    /// Loads, splits each condition in halves and preprocesses.
    fn prepare(&mut self, conditions: &[f64]) -> Result<Prepared, CliError> {
        let events = self.load_events(conditions)?;
        let split_seed = self.seed("split");
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (k, &c) in conditions.iter().enumerate() {
            let at: Vec<EventRecord> = events.iter().filter(|e| same_energy(e.e_in, c)).copied().collect();
            let (a, b) = split_train_test(&at, split_seed.wrapping_add(k as u64));
            train.extend(a);
            test.extend(b);
        }
        let (ftrain, params) = preprocess(&train)?;
        let ftest = params.transform(&test)?;
        Ok(Prepared { train, test, ftrain, ftest, params })
    }

    fn train_qcbm(
        &mut self,
        name: &str,
        model: BornModel,
        target: &TrainingTarget,
        train: &qcbm_core::optimize::TrainConfig,
    ) -> Result<(BornModel, TrainTrace), CliError> {
        let start = self.clock;
        let (m, trace) = train_with_clock(&model, target, train, &|| start.elapsed().as_secs_f64())?;
        write_trace_csv(&self.out.join("traces").join(format!("{name}.csv")), &trace)?;
        Ok((m, trace))
    }

    /// Fits a single-condition QCBM on `columns`.
    fn fit_unconditional(
        &mut self,
        data: &Prepared,
        columns: &[usize],
        block: CorrelationBlockChoice,
        label: &str,
    ) -> Result<QcbmFit, CliError> {
        let cfg = self.cfg;
        let bits = vec![cfg.qubits_per_feature; columns.len()];
        let spec = BinningSpec::from_data(&select_columns(&data.ftrain, columns), &bits)?;
        let t = discretize(&data.rows_at(cfg.condition, false, columns), &spec)?;
        let v = discretize(&data.rows_at(cfg.condition, true, columns), &spec)?;
        let circuit = if columns.len() == 1 {
            build_1d_rzz_ansatz(cfg.qubits_per_feature)?
        } else {
            build_multivariate(columns.len(), cfg.qubits_per_feature, cfg.n_layers, block)?
        };
        let features = columns.iter().map(|&c| FEATURES[c].to_string()).collect();
        let n = circuit.n_parameters();
        let init_seed = self.seed(&format!("{label}.init"));
        let model = BornModel::new(circuit, init_parameters(n, cfg.init, init_seed), features)?;
        let train = train_config(cfg, &spec);
        self.seeds.insert(format!("{label}.train"), train.seed);
        let (model, trace) = self.train_qcbm(label, model, &TrainingTarget::single(t, v.clone()), &train)?;
        Ok(QcbmFit { model, trace, spec, columns: columns.to_vec(), validation: v })
    }

    fn record_model<M: Serialize>(
        &mut self,
        name: &str,
        kind: &str,
        n_parameters: usize,
        model: &M,
        trace: Option<&TrainTrace>,
        gmmd: Option<&GmmdTrace>,
        data: &Prepared,
        spec: &BinningSpec,
    ) -> Result<(), CliError> {
        let rel = format!("checkpoints/{name}.json");
        let ck = Checkpoint {
            model,
            master_seed: self.cfg.seed,
            seeds: self.seeds.clone(),
            preprocess: &data.params,
            binning: spec,
        };
        write_json(&self.out.join(&rel), &ck)?;
        if let Some(g) = gmmd {
            write_rows_csv(&self.out.join("traces").join(format!("{name}.csv")), &g.epochs)?;
        }
        self.models.push(ModelSummary {
            name: name.to_string(),
            kind: kind.to_string(),
            n_parameters,
            trace: trace.map(TraceSummary::from),
            loss_curve: gmmd.map(|g| g.epochs.iter().map(|e| e.loss).collect()).unwrap_or_default(),
            checkpoint: rel,
        });
        Ok(())
    }

    fn write_histogram(&mut self, file: &str, rows: &[HistogramRow]) -> Result<(), CliError> {
        let rel = format!("histograms/{file}.csv");
        write_histogram_csv(&self.out.join(&rel), rows)?;
        self.histograms.push(rel);
        Ok(())
    }

    /// `sampling_repetitions` draws of `n` joint bin indices from `dist`.
    fn qcbm_draws(&self, dist: &DiscreteDistribution, n: usize, label: &str) -> Vec<Vec<usize>> {
        (0..self.cfg.sampling_repetitions)
            .map(|r| sample(dist, n, derive_seed(self.cfg.seed, &format!("{label}.sample.{r}"))))
            .collect()
    }

    fn gmmd_draws(&self, net: &Mlp, spec: &BinningSpec, n: usize, condition: Option<f64>, label: &str) -> Vec<Vec<usize>> {
        (0..self.cfg.sampling_repetitions)
            .map(|r| {
                let seed = derive_seed(self.cfg.seed, &format!("{label}.sample.{r}"));
                let rows = match condition {
                    Some(c) => net.sample_conditional(n, c, seed),
                    None => net.sample(n, seed),
                };
                rows.iter().map(|row| spec.index(row)).collect()
            })
            .collect()
    }

    /// Marginal TVs, histograms and the pooled joint distribution of sampled draws.
    fn evaluate_draws(
        &mut self,
        name: &str,
        suffix: &str,
        draws: &[Vec<usize>],
        fit_spec: &BinningSpec,
        columns: &[usize],
        target: &DiscreteDistribution,
        n_target: usize,
        params: &PreprocessParams,
    ) -> Result<DiscreteDistribution, CliError> {
        let bits = fit_spec.register_bits();
        let pooled: Vec<usize> = draws.iter().flatten().copied().collect();
        let joint = DiscreteDistribution::from_counts(&pooled, bits.clone())?;
        for (f, &col) in columns.iter().enumerate() {
            let axis = fit_spec.axes[f];
            let target_m = target.marginal(f)?;
            let per_rep: Vec<Vec<f64>> = draws
                .iter()
                .map(|d| {
                    let mut counts = vec![0.0; axis.n_bins()];
                    for &i in d {
                        counts[split_index(i, &bits)[f]] += 1.0;
                    }
                    counts
                })
                .collect();
            let rows = histogram_rows(&per_rep, &target_m, n_target, |b| physical_center(params, col, axis.center(b)));
            self.write_histogram(&format!("{name}_{}{suffix}", FEATURES[col]), &rows)?;
        }
        Ok(joint)
    }

    fn one_dim(&mut self) -> Result<(), CliError> {
        let data = self.prepare(&[self.cfg.condition])?;
        let fit = self.fit_unconditional(&data, &[0], CorrelationBlockChoice::LINEAR_FIRST, "qcbm")?;
        self.report_qcbm(&data, &fit, "qcbm")?;
        if let Some(g) = self.cfg.gmmd.clone() {
            self.run_gmmd(&data, &fit, &g)?;
        }
        Ok(())
    }

    fn multi(&mut self) -> Result<(), CliError> {
        let data = self.prepare(&[self.cfg.condition])?;
        let fit = self.fit_unconditional(&data, &[0, 1, 2], self.cfg.block, "qcbm")?;
        let generated = self.report_qcbm(&data, &fit, "qcbm")?;
        let test_rows = data.rows_at(self.cfg.condition, true, &[0, 1, 2]);
        let test_corr = pearson_correlation(&test_rows)?;
        let configured = match &self.cfg.data {
            DataSource::Synthetic { correlation, .. } => Some(correlation.iter().map(|r| r.to_vec()).collect::<Vec<_>>()),
            DataSource::Csv { .. } => None,
        };
        let mut table = CorrelationTable {
            features: FEATURES.iter().map(|s| s.to_string()).collect(),
            configured,
            test_data: test_corr,
            generated: BTreeMap::new(),
        };
        let reference = table.configured.clone().unwrap_or_else(|| table.test_data.clone());
        let mut record = |run: &mut Self, name: &str, corr: Vec<Vec<f64>>| {
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                run.metrics.insert(
                    format!("{name}.corr_error.{}_{}", FEATURES[i], FEATURES[j]),
                    (corr[i][j] - reference[i][j]).abs(),
                );
            }
            table.generated.insert(name.to_string(), corr);
        };
        record(self, "qcbm", generated);
        if let Some(g) = self.cfg.gmmd.clone() {
            let corr = self.run_gmmd(&data, &fit, &g)?;
            record(self, "gmmd", corr);
        }
        self.correlations = Some(table);
        Ok(())
    }

    /// TV metrics, histograms and checkpoint of a fitted QCBM. Returns the
    /// Pearson matrix of its samples (bin centers, preprocessed units).
    fn report_qcbm(&mut self, data: &Prepared, fit: &QcbmFit, name: &str) -> Result<Vec<Vec<f64>>, CliError> {
        let p = fit.model.model_distribution(None)?;
        for (f, &col) in fit.columns.iter().enumerate() {
            let tv = total_variance(&p.marginal(f)?, &fit.validation.marginal(f)?)?;
            self.metrics.insert(format!("{name}.tv.{}", FEATURES[col]), tv);
        }
        if fit.columns.len() > 1 {
            self.metrics.insert(format!("{name}.tv.joint"), total_variance(&p, &fit.validation)?);
        }
        self.metrics.insert(format!("{name}.val_mmd"), fit.trace.best_val_loss);
        let n_test = data.rows_at(self.cfg.condition, true, &[0]).len();
        let draws = self.qcbm_draws(&p, n_test, name);
        self.evaluate_draws(name, "", &draws, &fit.spec, &fit.columns, &fit.validation, n_test, &data.params)?;
        self.record_model(name, "qcbm", fit.model.n_parameters(), &fit.model, Some(&fit.trace), None, data, &fit.spec)?;
        let rows: Vec<Vec<f64>> = draws.iter().flatten().map(|&i| fit.spec.centers(i)).collect();
        if fit.columns.len() > 1 {
            Ok(pearson_correlation(&rows)?)
        } else {
            Ok(vec![vec![1.0]])
        }
    }

    /// Trains the classical baseline on the same columns and bins as `fit`.
    fn run_gmmd(&mut self, data: &Prepared, fit: &QcbmFit, g: &GmmdSettings) -> Result<Vec<Vec<f64>>, CliError> {
        let spec = MlpSpec::new(g.latent_dim, g.hidden.clone(), fit.columns.len())?;
        let rows = data.rows_at(self.cfg.condition, false, &fit.columns);
        self.seeds.insert("gmmd.train".into(), g.train.seed);
        let (net, trace) = train_gmmd(&spec, &rows, &g.train)?;
        let n_test = data.rows_at(self.cfg.condition, true, &[0]).len();
        let draws = self.gmmd_draws(&net, &fit.spec, g.n_samples, None, "gmmd");
        let joint = self.evaluate_draws("gmmd", "", &draws, &fit.spec, &fit.columns, &fit.validation, n_test, &data.params)?;
        for (f, &col) in fit.columns.iter().enumerate() {
            let tv = total_variance(&joint.marginal(f)?, &fit.validation.marginal(f)?)?;
            self.metrics.insert(format!("gmmd.tv.{}", FEATURES[col]), tv);
        }
        if fit.columns.len() > 1 {
            self.metrics.insert("gmmd.tv.joint".into(), total_variance(&joint, &fit.validation)?);
        }
        self.record_model("gmmd", "gmmd", spec.n_parameters(), &net, None, Some(&trace), data, &fit.spec)?;
        if fit.columns.len() > 1 {
            let centers: Vec<Vec<f64>> = draws.iter().flatten().map(|&i| fit.spec.centers(i)).collect();
            Ok(pearson_correlation(&centers)?)
        } else {
            Ok(vec![vec![1.0]])
        }
    }

    fn conditional(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let conditions = cfg.conditions.clone();
        let data = self.prepare(&conditions)?;
        let spec = BinningSpec::from_data(&select_columns(&data.ftrain, &[0]), &[cfg.qubits_per_feature])?;
        let mut items = Vec::new();
        for &e in &conditions {
            items.push(ConditionedTarget {
                condition: Some(e),
                train: discretize(&data.rows_at(e, false, &[0]), &spec)?.with_condition(Some(e)),
                validation: discretize(&data.rows_at(e, true, &[0]), &spec)?.with_condition(Some(e)),
            });
        }
        let e_min = conditions.iter().copied().fold(f64::INFINITY, f64::min);
        let e_max = conditions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let encoder = ConditionEncoder { e_min, e_max };
        let circuit = build_conditional(cfg.qubits_per_feature, cfg.n_layers)?;
        let n = circuit.n_parameters();
        let init_seed = self.seed("qcbm.init");
        let model = BornModel::new(circuit, init_parameters(n, cfg.init, init_seed), vec![FEATURES[0].to_string()])?
            .with_condition_encoder(encoder)?;
        self.seeds.insert("qcbm.train".into(), cfg.train.seed);
        let train = train_config(cfg, &spec);
        let (model, trace) = self.train_qcbm("qcbm", model, &TrainingTarget::conditional(items.clone()), &train)?;
        self.metrics.insert("qcbm.val_mmd".into(), trace.best_val_loss);

        let gmmd = match cfg.gmmd.clone() {
            Some(g) => {
                let spec_net = MlpSpec::new(g.latent_dim + 1, g.hidden.clone(), 1)?;
                let groups: Vec<ConditionGroup> = conditions
                    .iter()
                    .filter(|e| !held_out(cfg, **e))
                    .map(|&e| ConditionGroup { condition: scale(e, e_min, e_max), data: data.rows_at(e, false, &[0]) })
                    .collect();
                self.seeds.insert("gmmd.train".into(), g.train.seed);
                let (net, trace) = train_conditional_gmmd(&spec_net, &groups, &g.train)?;
                self.record_model("gmmd", "gmmd", spec_net.n_parameters(), &net, None, Some(&trace), &data, &spec)?;
                Some((net, g.n_samples))
            }
            None => None,
        };

        let (mut sums, mut counts) = (BTreeMap::<String, f64>::new(), BTreeMap::<String, f64>::new());
        for item in &items {
            let e = item.condition.expect("conditional targets carry their energy");
            let split = if held_out(cfg, e) { "test" } else { "train" };
            let suffix = format!("_e{}", energy_label(e));
            let n_test = data.rows_at(e, true, &[0]).len();
            let p = model.model_distribution(Some(e))?;
            let mut tv = BTreeMap::new();
            tv.insert("qcbm".to_string(), total_variance(&p, &item.validation)?);
            let draws = self.qcbm_draws(&p, n_test, &format!("qcbm{suffix}"));
            self.evaluate_draws("qcbm", &suffix, &draws, &spec, &[0], &item.validation, n_test, &data.params)?;
            if let Some((net, n_samples)) = &gmmd {
                let draws = self.gmmd_draws(net, &spec, *n_samples, Some(scale(e, e_min, e_max)), &format!("gmmd{suffix}"));
                let joint = self.evaluate_draws("gmmd", &suffix, &draws, &spec, &[0], &item.validation, n_test, &data.params)?;
                tv.insert("gmmd".to_string(), total_variance(&joint, &item.validation)?);
            }
            for (model_name, v) in &tv {
                self.metrics.insert(format!("{model_name}.tv.e_in_{}", energy_label(e)), *v);
                *sums.entry(format!("{model_name}.tv.{split}_mean")).or_default() += v;
                *counts.entry(format!("{model_name}.tv.{split}_mean")).or_default() += 1.0;
            }
            self.per_condition.push(ConditionRow { condition: e, split: split.to_string(), tv });
        }
        for (k, s) in sums {
            self.metrics.insert(k.clone(), s / counts[&k]);
        }
        self.record_model("qcbm", "qcbm", model.n_parameters(), &model, Some(&trace), None, &data, &spec)?;
        Ok(())
    }

    fn blocks(&mut self) -> Result<(), CliError> {
        let data = self.prepare(&[self.cfg.condition])?;
        let cfg = self.cfg;
        let columns = [0, 1, 2];
        let spec = BinningSpec::from_data(&select_columns(&data.ftrain, &columns), &[cfg.qubits_per_feature; 3])?;
        let t = discretize(&data.rows_at(cfg.condition, false, &columns), &spec)?;
        let v = discretize(&data.rows_at(cfg.condition, true, &columns), &spec)?;
        let target = TrainingTarget::single(t, v.clone());
        let start = self.clock;
        let fits: Vec<Result<(String, BornModel, TrainTrace, u64, u64), CliError>> = CorrelationBlockChoice::all()
            .par_iter()
            .map(|&choice| {
                let slug = block_slug(choice);
                let circuit = build_multivariate(3, cfg.qubits_per_feature, cfg.n_layers, choice)?;
                let n = circuit.n_parameters();
                let init_seed = derive_seed(cfg.seed, &format!("blocks.{slug}.init"));
                let train_seed = derive_seed(cfg.seed, &format!("blocks.{slug}.train"));
                let features = FEATURES.iter().map(|s| s.to_string()).collect();
                let model = BornModel::new(circuit, init_parameters(n, cfg.init, init_seed), features)?;
                let train = qcbm_core::optimize::TrainConfig { seed: train_seed, ..train_config(cfg, &spec) };
                let (m, trace) = train_with_clock(&model, &target, &train, &|| start.elapsed().as_secs_f64())?;
                Ok((slug, m, trace, init_seed, train_seed))
            })
            .collect();
        for fit in fits {
            let (slug, model, trace, init_seed, train_seed) = fit?;
            self.seeds.insert(format!("blocks.{slug}.init"), init_seed);
            self.seeds.insert(format!("blocks.{slug}.train"), train_seed);
            write_trace_csv(&self.out.join("traces").join(format!("{slug}.csv")), &trace)?;
            let last = trace.epochs.last().map_or(trace.initial_val_loss, |e| e.val_loss);
            self.metrics.insert(format!("blocks.{slug}.val_mmd"), last);
            self.metrics.insert(format!("blocks.{slug}.best_val_mmd"), trace.best_val_loss);
            let p = model.model_distribution(None)?;
            self.metrics.insert(format!("blocks.{slug}.tv.joint"), total_variance(&p, &v)?);
            self.record_model(&slug, "qcbm", model.n_parameters(), &model, Some(&trace), None, &data, &spec)?;
        }
        Ok(())
    }

    fn noise(&mut self) -> Result<(), CliError> {
        let settings = self.cfg.noise_eval.clone().ok_or_else(|| CliError::Validation("noise_eval: missing".into()))?;
        let data = self.prepare(&[self.cfg.condition])?;
        let columns: Vec<usize> = match settings.base {
            ExperimentKind::OneDim => vec![0],
            _ => vec![0, 1, 2],
        };
        let fit = self.fit_unconditional(&data, &columns, self.cfg.block, "qcbm")?;
        self.metrics.insert("qcbm.val_mmd".into(), fit.trace.best_val_loss);
        self.record_model("qcbm", "qcbm", fit.model.n_parameters(), &fit.model, Some(&fit.trace), None, &data, &fit.spec)?;

        let noise = &settings.noise;
        let circuit = fit.model.circuit();
        let n_qubits = circuit.n_qubits();
        let exact = fit.model.model_distribution(None)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(noise.seed);
        let channel = apply_cnot_depolarizing(circuit, fit.model.theta(), None, noise, &mut rng)?;
        let noisy = apply_readout_noise(&channel, noise)?;
        let matrix = self.confusion_matrix(n_qubits, noise, settings.calibration_shots)?;

        // Per-trial TVs, joint first, then one per feature.
        let tvs = |p: &DiscreteDistribution| -> Result<Vec<f64>, CliError> {
            let mut out = vec![total_variance(p, &fit.validation)?];
            for f in 0..columns.len() {
                out.push(total_variance(&p.marginal(f)?, &fit.validation.marginal(f)?)?);
            }
            Ok(out)
        };
        let mut pipelines: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
        pipelines.insert("exact", vec![tvs(&exact)?]);
        let mut failures = 0usize;
        for trial in 0..settings.trials {
            let idx = sample(&noisy, settings.shots, derive_seed(self.cfg.seed, &format!("noise.trial.{trial}")));
            let measured = DiscreteDistribution::from_counts(&idx, noisy.register_bits().to_vec())?;
            let mitigated = mitigate_readout(&measured, &matrix)?;
            let raw = tvs(&measured)?;
            let fixed = tvs(&mitigated)?;
            if fixed[0] > raw[0] {
                failures += 1;
            }
            pipelines.entry("noisy").or_default().push(raw);
            pipelines.entry("mitigated").or_default().push(fixed);
        }
        for (pipeline, trials) in &pipelines {
            let names = std::iter::once("joint").chain(columns.iter().map(|&c| FEATURES[c]));
            for (k, name) in names.enumerate() {
                let mean = trials.iter().map(|t| t[k]).sum::<f64>() / trials.len() as f64;
                self.metrics.insert(format!("{pipeline}.tv.{name}"), mean);
            }
        }
        self.metrics.insert("mitigation_failure_rate".into(), failures as f64 / settings.trials as f64);
        let n_test = data.rows_at(self.cfg.condition, true, &[0]).len();
        for (name, dist) in [("exact", &exact), ("noisy", &noisy)] {
            let draws = self.qcbm_draws(dist, n_test, name);
            self.evaluate_draws(name, "", &draws, &fit.spec, &columns, &fit.validation, n_test, &data.params)?;
        }
        Ok(())
    }

    /// Calibration is the expensive part of mitigation; reuse a cached matrix
    /// when qubit count, noise model and shot budget all match.
    fn confusion_matrix(&self, n_qubits: usize, noise: &NoiseConfig, shots: usize) -> Result<ConfusionMatrix, CliError> {
        let path = self.out.join("confusion_matrix.json");
        if path.exists() {
            if let Ok(c) = crate::io::read_json::<CachedConfusion>(&path) {
                if c.n_qubits == n_qubits && &c.noise == noise && c.calibration_shots == shots {
                    return Ok(c.matrix);
                }
            }
        }
        let matrix = estimate_confusion_matrix(n_qubits, noise, shots)?;
        let cached = CachedConfusion { n_qubits, noise: noise.clone(), calibration_shots: shots, matrix };
        write_json(&path, &cached)?;
        Ok(cached.matrix)
    }

}

fn held_out(cfg: &ExperimentConfig, e: f64) -> bool {
    cfg.train.held_out_conditions.iter().any(|h| same_energy(*h, e))
}

/// Condition input of the classical generator, in `[0, 1]`.
fn scale(e: f64, e_min: f64, e_max: f64) -> f64 {
    (e - e_min) / (e_max - e_min)
}

/// Metric-safe name of a block choice, e.g. `linear_1` or `full_all_bell`.
pub fn block_slug(choice: CorrelationBlockChoice) -> String {
    choice
        .label()
        .trim_matches(|c| c == '(' || c == ')')
        .split(", ")
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Center of a bin on a preprocessed axis, mapped back to physical units.
fn physical_center(params: &PreprocessParams, column: usize, z: f64) -> f64 {
    let mut v = [0.0; 3];
    v[column] = z;
    params.inverse(&v).map_or(z, |p| p[column])
}

/// Mean and spread over repetitions of per-bin counts, against target
/// probabilities scaled to `n_target` events.
/// The configured training settings, with kernel coordinates for `spec`.
fn train_config(cfg: &ExperimentConfig, spec: &BinningSpec) -> qcbm_core::optimize::TrainConfig {
    let mut train = cfg.train.clone();
    if cfg.kernel_space == KernelSpace::Feature {
        let coords = spec.axes.iter().map(|a| (0..a.n_bins()).map(|b| a.center(b)).collect()).collect();
        train.kernel.bin_coordinates = Some(coords);
    }
    train
}

fn histogram_rows(
    per_rep: &[Vec<f64>],
    target: &DiscreteDistribution,
    n_target: usize,
    center: impl Fn(usize) -> f64,
) -> Vec<HistogramRow> {
    let reps = per_rep.len() as f64;
    target
        .probs()
        .iter()
        .enumerate()
        .map(|(b, &tp)| {
            let counts: Vec<f64> = per_rep.iter().map(|c| c[b]).collect();
            let n_rep: f64 = per_rep.first().map_or(0.0, |c| c.iter().sum());
            let mean = counts.iter().sum::<f64>() / reps;
            let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (reps - 1.0).max(1.0);
            let std = var.sqrt();
            let probability = if n_rep > 0.0 { mean / n_rep } else { 0.0 };
            let (ratio, ratio_std) = if tp > 0.0 && n_rep > 0.0 {
                (probability / tp, std / n_rep / tp)
            } else {
                (f64::NAN, f64::NAN)
            };
            HistogramRow {
                bin_index: b,
                bin_center: center(b),
                count: mean,
                probability,
                count_std: std,
                target_count: tp * n_target as f64,
                target_probability: tp,
                ratio,
                ratio_std,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_slugs_are_distinct() {
        let slugs: Vec<String> = CorrelationBlockChoice::all().into_iter().map(block_slug).collect();
        assert_eq!(slugs[0], "linear_1");
        assert!(slugs.contains(&"full_all_bell".to_string()));
        let mut dedup = slugs.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 8);
    }

    #[test]
    fn histogram_spread_over_repetitions() {
        let target = DiscreteDistribution::one_dim(vec![0.5, 0.5]).unwrap();
        let rows = histogram_rows(&[vec![4.0, 6.0], vec![6.0, 4.0]], &target, 20, |b| b as f64);
        assert_eq!(rows.len(), 2);
        assert!((rows[0].count - 5.0).abs() < 1e-12);
        assert!((rows[0].probability - 0.5).abs() < 1e-12);
        assert!((rows[0].count_std - 2f64.sqrt()).abs() < 1e-12);
        assert!((rows[0].target_count - 10.0).abs() < 1e-12);
        assert!((rows[0].ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_labels() {
        assert_eq!(energy_label(125.0), "125");
        assert_eq!(energy_label(62.5), "62p5");
    }
}
