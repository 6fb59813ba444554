//! Recall-based evaluation of prediction files.
//!
//! Prediction files are CSV with header `video_id,track_id,anchor,true,pred`.
//! Aggregates over several runs use the population standard deviation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::{ClipKey, DamageStatus};

const HEADER: [&str; 5] = ["video_id", "track_id", "anchor", "true", "pred"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction records")]
    EmptyRun,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("run {run} covers classes {found:?}, expected {expected:?}")]
    InconsistentCoverage {
        run: usize,
        expected: Vec<&'static str>,
        found: Vec<&'static str>,
    },
    #[error("class sets differ: {a:?} vs {b:?}")]
    ClassMismatch {
        a: Vec<&'static str>,
        b: Vec<&'static str>,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub key: ClipKey,
    pub true_label: DamageStatus,
    pub predicted: DamageStatus,
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(EvalError::Parse {
            line: 1,
            message: format!("expected header {}, got {}", HEADER.join(","), header.join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| EvalError::Parse { line, message };
        let num = |i: usize| -> Result<u64, EvalError> {
            row[i]
                .parse()
                .map_err(|_| err(format!("bad {} {:?}", HEADER[i], &row[i])))
        };
        let label = |i: usize| DamageStatus::from_str(&row[i]).map_err(|e| err(e.to_string()));
        let rec = PredictionRecord {
            key: ClipKey::new(&row[0], num(1)?, num(2)?),
            true_label: label(3)?,
            predicted: label(4)?,
        };
        if !seen.insert(rec.key.clone()) {
            return Err(err(format!("duplicate clip {}", rec.key)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, EvalError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_predictions(file)
}

pub fn write_predictions<W: Write>(records: &[PredictionRecord], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.key.video_id.as_str(),
            &r.key.track_id.to_string(),
            &r.key.anchor.to_string(),
            r.true_label.as_str(),
            r.predicted.as_str(),
        ])?;
    }
    w.flush().map_err(|e| EvalError::Csv(e.into()))?;
    Ok(())
}

/// Rows are true classes, columns predicted classes, both in
/// `[safe, evacuation, call_for_help, emergency]` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn support(&self) -> [u64; 4] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.support().iter().sum()
    }

    /// Each non-empty row divided by its sum.
    pub fn row_stochastic(&self) -> [Option<[f64; 4]>; 4] {
        self.counts.map(|row| {
            let sum: u64 = row.iter().sum();
            (sum > 0).then(|| row.map(|c| c as f64 / sum as f64))
        })
    }
}

pub fn confusion_matrix(records: &[PredictionRecord]) -> Result<ConfusionMatrix, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let mut m = ConfusionMatrix::default();
    for r in records {
        m.counts[r.true_label.index()][r.predicted.index()] += 1;
    }
    Ok(m)
}

/// Per-class recall; `None` for a class with no true instances.
pub fn recall_per_class(m: &ConfusionMatrix) -> [Option<f64>; 4] {
    let support = m.support();
    std::array::from_fn(|i| (support[i] > 0).then(|| m.counts[i][i] as f64 / support[i] as f64))
}

/// Mean and spread of per-class recall over runs, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunAggregate {
    pub mean: [Option<f64>; 4],
    pub std: [Option<f64>; 4],
    pub runs: usize,
}

impl RunAggregate {
    pub fn classes(&self) -> Vec<&'static str> {
        defined(&self.mean)
    }
}

fn defined(values: &[Option<f64>; 4]) -> Vec<&'static str> {
    DamageStatus::ALL
        .iter()
        .filter(|s| values[s.index()].is_some())
        .map(|s| s.as_str())
        .collect()
}

/// Mean and population standard deviation per class. Every run must define
/// recall for the same classes.
pub fn aggregate_runs(runs: &[[Option<f64>; 4]]) -> Result<RunAggregate, EvalError> {
    let first = runs.first().ok_or(EvalError::NoRuns)?;
    let expected = defined(first);
    for (i, r) in runs.iter().enumerate() {
        let found = defined(r);
        if found != expected {
            return Err(EvalError::InconsistentCoverage {
                run: i,
                expected,
                found,
            });
        }
    }
    let n = runs.len() as f64;
    let mut mean = [None; 4];
    let mut std = [None; 4];
    for c in 0..4 {
        if first[c].is_none() {
            continue;
        }
        let values: Vec<f64> = runs.iter().map(|r| r[c].expect("coverage checked")).collect();
        let m = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        mean[c] = Some(m);
        std[c] = Some(var.sqrt());
    }
    Ok(RunAggregate {
        mean,
        std,
        runs: runs.len(),
    })
}

/// `mean±std` in percent with two decimals, e.g. `84.33±3.56`.
pub fn format_pm(mean_pct: f64, std_pct: f64) -> String {
    format!("{mean_pct:.2}±{std_pct:.2}")
}

fn cell(agg: &RunAggregate, c: usize) -> String {
    match (agg.mean[c], agg.std[c]) {
        (Some(m), Some(s)) => format_pm(m * 100.0, s * 100.0),
        _ => "undefined".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub class: &'static str,
    pub a: String,
    pub b: String,
    /// Difference of means in percentage points.
    pub delta_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub labels: (String, String),
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>14} {:>14} {:>8}", "class", self.labels.0, self.labels.1, "delta");
        for r in &self.rows {
            let _ = writeln!(out, "{:<14} {:>14} {:>14} {:>+8.2}", r.class, r.a, r.b, r.delta_pp);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("class,{},{},delta_pp\n", self.labels.0, self.labels.1);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:+.2}", r.class, r.a, r.b, r.delta_pp);
        }
        out
    }
}

/// Side-by-side per-class aggregates with `a - b` deltas.
pub fn compare_runs(
    a: &RunAggregate,
    b: &RunAggregate,
    labels: (&str, &str),
) -> Result<Comparison, EvalError> {
    if a.classes() != b.classes() {
        return Err(EvalError::ClassMismatch {
            a: a.classes(),
            b: b.classes(),
        });
    }
    let rows = DamageStatus::ALL
        .iter()
        .filter_map(|s| {
            let c = s.index();
            Some(ComparisonRow {
                class: s.as_str(),
                a: cell(a, c),
                b: cell(b, c),
                delta_pp: (a.mean[c]? - b.mean[c]?) * 100.0,
            })
        })
        .collect();
    Ok(Comparison {
        labels: (labels.0.to_string(), labels.1.to_string()),
        rows,
    })
}

/// Evaluation of one or more prediction runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub matrices: Vec<ConfusionMatrix>,
    pub aggregate: RunAggregate,
}

pub fn evaluate_runs(runs: &[Vec<PredictionRecord>]) -> Result<EvalReport, EvalError> {
    let matrices = runs
        .iter()
        .map(|r| confusion_matrix(r))
        .collect::<Result<Vec<_>, _>>()?;
    let recalls: Vec<[Option<f64>; 4]> = matrices.iter().map(recall_per_class).collect();
    Ok(EvalReport {
        aggregate: aggregate_runs(&recalls)?,
        matrices,
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "recall over {} run(s)", self.aggregate.runs);
        for s in DamageStatus::ALL {
            let _ = writeln!(out, "  {:<14} {}", s.as_str(), cell(&self.aggregate, s.index()));
        }
        for (i, m) in self.matrices.iter().enumerate() {
            let _ = writeln!(out, "\nconfusion matrix, run {} (rows true, columns predicted)", i + 1);
            let _ = write!(out, "  {:<14}", "");
            for s in DamageStatus::ALL {
                let _ = write!(out, " {:>13}", s.as_str());
            }
            out.push('\n');
            for s in DamageStatus::ALL {
                let _ = write!(out, "  {:<14}", s.as_str());
                for c in m.counts[s.index()] {
                    let _ = write!(out, " {c:>13}");
                }
                out.push('\n');
            }
        }
        let _ = writeln!(
            out,
            "\n± is the population standard deviation (ddof 0) over runs."
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}
