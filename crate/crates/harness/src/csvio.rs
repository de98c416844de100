//! Versioned CSV tables. Each file starts with a `# schema=<name> version=<n>`
//! line followed by the header row; readers reject any other schema,
//! version or column list.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub trait Schema {
    const NAME: &'static str;
    const VERSION: u32;
    const COLUMNS: &'static [&'static str];
}

fn schema_line<T: Schema>() -> String {
    format!("# schema={} version={}", T::NAME, T::VERSION)
}

fn csv_err(path: &Path, detail: impl ToString) -> HarnessError {
    HarnessError::Csv {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

pub fn to_string<T: Schema + Serialize>(rows: &[T]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::COLUMNS).map_err(|e| csv_err(Path::new("<memory>"), e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(Path::new("<memory>"), e))?;
    }
    let body = w.into_inner().map_err(|e| csv_err(Path::new("<memory>"), e))?;
    let mut out = schema_line::<T>().into_bytes();
    out.push(b'\n');
    out.extend(body);
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

pub fn write<T: Schema + Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let text = to_string(rows)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

pub fn read<T: Schema + DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = BufReader::new(f);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| HarnessError::io(path, e))?;
    if first.trim_end() != schema_line::<T>() {
        return Err(csv_err(
            path,
            format!("expected `{}`, found `{}`", schema_line::<T>(), first.trim_end()),
        ));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(T::COLUMNS.iter().copied()) {
        return Err(csv_err(path, format!("columns {:?} differ from {:?}", header, T::COLUMNS)));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// One evaluation of one policy at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub axis: String,
    pub point: f64,
    pub seed: u64,
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub worst10: f64,
}

impl Schema for SweepRow {
    const NAME: &'static str = "sweep";
    const VERSION: u32 = 1;
    const COLUMNS: &'static [&'static str] = &["label", "axis", "point", "seed", "episodes", "mean", "std", "worst10"];
}

/// One checked instance of a verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub suite: String,
    pub instance: u64,
    pub detail: String,
    /// Identity residual; empty for pure inequality checks.
    pub residual: Option<f64>,
    /// Bound slack; empty for pure identity checks and infeasible cases.
    pub slack: Option<f64>,
    pub pass: bool,
}

impl Schema for VerifyRow {
    const NAME: &'static str = "verify";
    const VERSION: u32 = 1;
    const COLUMNS: &'static [&'static str] = &["suite", "instance", "detail", "residual", "slack", "pass"];
}

/// Final statistics of one training seed, or their mean / std across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub updates: f64,
    pub env_steps: f64,
    pub mean_return: f64,
    pub worst10_return: f64,
    pub lower_tail_risk: f64,
    pub beta: f64,
    pub eval_mean: f64,
    pub best_eval_mean: f64,
}

impl Schema for SummaryRow {
    const NAME: &'static str = "train-summary";
    const VERSION: u32 = 1;
    const COLUMNS: &'static [&'static str] = &[
        "label",
        "updates",
        "env_steps",
        "mean_return",
        "worst10_return",
        "lower_tail_risk",
        "beta",
        "eval_mean",
        "best_eval_mean",
    ];
}
