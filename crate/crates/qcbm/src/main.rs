use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qcbm::config::{load_config, load_synth_params, Override};
use qcbm::error::{CliError, EXIT_OK, EXIT_REGRESSION};
use qcbm::experiments::run_experiment;
use qcbm::io::{read_json, write_events_csv};
use qcbm::report::{compare_report, render_report, Report};
use qcbm_core::data::synthesize_dataset;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "qcbm", version = env!("QCBM_BUILD_VERSION"), about = "Train and compare quantum circuit Born machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override a config field, e.g. `--set train.max_epochs=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<Override>,
        #[arg(long)]
        seed: Option<u64>,
        /// Shorthand for `--set train.max_epochs=N`.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Directory that relative output directories are resolved against.
        #[arg(long, env = "QCBM_OUTPUT_ROOT", default_value = ".")]
        output_root: PathBuf,
    },
    /// Compare two report.json files; exits 3 when a metric regresses.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Write a synthetic event CSV from a JSON parameter file.
    SynthData { params: PathBuf, out: PathBuf },
    /// Pretty-print the report of a finished run.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config, mut overrides, seed, epochs, output_dir, output_root } => {
            if let Some(s) = seed {
                overrides.push(Override { path: vec!["seed".into()], value: Value::from(s) });
            }
            if let Some(n) = epochs {
                overrides.push(Override { path: vec!["train".into(), "max_epochs".into()], value: Value::from(n) });
            }
            if let Some(dir) = output_dir {
                let dir = dir.display().to_string();
                overrides.push(Override { path: vec!["output_dir".into()], value: Value::from(dir) });
            }
            let cfg = load_config(&config, &overrides)?;
            let report = run_experiment(&cfg, &output_root)?;
            print!("{}", render_report(&report));
            println!("wrote {}", output_root.join(&cfg.output_dir).display());
            Ok(EXIT_OK)
        }
        Command::Compare { a, b, tolerance } => {
            let ra: Report = read_json(&report_path(&a))?;
            let rb: Report = read_json(&report_path(&b))?;
            let cmp = compare_report(&ra, &rb, tolerance)?;
            print!("{}", cmp.render());
            Ok(if cmp.has_regression() { EXIT_REGRESSION } else { EXIT_OK })
        }
        Command::SynthData { params, out } => {
            let p = load_synth_params(&params)?;
            let events = synthesize_dataset(p.events_per_condition, &p.conditions, &p.correlation, p.seed)?;
            write_events_csv(&out, &events)?;
            println!("wrote {} events to {}", events.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Report { dir } => {
            let r: Report = read_json(&report_path(&dir))?;
            print!("{}", render_report(&r));
            Ok(EXIT_OK)
        }
    }
}

/// Accepts either a run directory or the report file itself.
fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}
