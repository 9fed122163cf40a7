//! File formats: event CSV in and out, histogram and trace CSVs, JSON documents.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use qcbm_core::data::EventRecord;
use qcbm_core::optimize::{Phase, TrainTrace};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

const COLUMNS: [&str; 4] = ["e_out", "pt", "eta", "e_in"];

/// Reads events from a CSV with a header naming `e_out, pt, eta, e_in`
/// (any order, extra columns ignored). Row numbers in errors count data
/// rows from 1.
pub fn load_csv(path: &Path) -> Result<Vec<EventRecord>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_events(file, &path.display().to_string())
}

pub fn read_events<R: std::io::Read>(reader: R, source: &str) -> Result<Vec<EventRecord>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Validation(format!("{source}: cannot read header: {e}")))?
        .clone();
    let mut index = [0usize; 4];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Validation(format!("{source}: missing column `{name}`")))?;
    }
    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Validation(format!("{source}: row {row}: {e}")))?;
        let mut v = [0.0; 4];
        for ((x, &col), name) in v.iter_mut().zip(&index).zip(COLUMNS) {
            let field = record.get(col).unwrap_or("");
            *x = field.parse().map_err(|_| {
                CliError::Validation(format!("{source}: row {row}: column `{name}`: cannot parse {field:?} as a number"))
            })?;
        }
        events.push(EventRecord { e_out: v[0], pt: v[1], eta: v[2], e_in: v[3] });
    }
    Ok(events)
}

pub fn write_events_csv(path: &Path, events: &[EventRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let out = |r: csv::Result<()>| r.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())));
    out(w.write_record(COLUMNS))?;
    for e in events {
        out(w.serialize((e.e_out, e.pt, e.eta, e.e_in)))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One histogram bin of a generated-vs-target comparison.
///
/// `count` and `probability` describe the generated sample, averaged over
/// the sampling repetitions; `count_std` and `ratio_std` are their standard
/// deviations across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub bin_index: usize,
    pub bin_center: f64,
    pub count: f64,
    pub probability: f64,
    pub count_std: f64,
    pub target_count: f64,
    pub target_probability: f64,
    pub ratio: f64,
    pub ratio_std: f64,
}

pub fn write_histogram_csv(path: &Path, rows: &[HistogramRow]) -> Result<(), CliError> {
    write_rows_csv(path, rows)
}

/// One CSV row per item, header from the field names.
pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Columns `epoch, phase, train_loss, val_loss, tv, lr, grad_norm, seconds`.
pub fn write_trace_csv(path: &Path, trace: &TrainTrace) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = String::from("epoch,phase,train_loss,val_loss,sampled_val_loss,tv,lr,grad_norm,seconds\n");
    for e in &trace.epochs {
        let phase = match e.phase {
            Phase::Adam => "adam",
            Phase::Spsa => "spsa",
        };
        let sampled = e.sampled_val_loss.map(|v| v.to_string()).unwrap_or_default();
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.epoch, phase, e.train_loss, e.val_loss, sampled, e.tv, e.lr, e.grad_norm, e.seconds
        ));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline. Field order follows the types, and
/// maps should be `BTreeMap`, so equal values give equal bytes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("{}: cannot serialize: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
