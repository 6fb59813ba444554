use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use triage_core::eval::{compare_runs, evaluate_runs, load_predictions, PredictionRecord};

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Prediction CSV; repeat once per run.
    #[arg(long = "pred", required = true)]
    pred: Vec<PathBuf>,
    /// Second set of runs to compare against `--pred`.
    #[arg(long = "compare-pred")]
    compare_pred: Vec<PathBuf>,
    /// Column names for the comparison, as `a,b`.
    #[arg(long, value_parser = parse_labels, default_value = "a,b")]
    labels: (String, String),
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_labels(s: &str) -> Result<(String, String), String> {
    match s.split(',').collect::<Vec<_>>()[..] {
        [a, b] => Ok((a.trim().to_string(), b.trim().to_string())),
        _ => Err(format!("expected two comma-separated names, got {s:?}")),
    }
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Vec<PredictionRecord>>> {
    paths
        .iter()
        .map(|p| load_predictions(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

pub fn run(args: EvalArgs) -> Result<()> {
    let report = evaluate_runs(&load_all(&args.pred)?)?;
    if args.compare_pred.is_empty() {
        let text = match args.format {
            Format::Text => report.to_text(),
            Format::Json => report.to_json() + "\n",
            Format::Csv => bail!("csv output needs --compare-pred"),
        };
        return crate::emit(args.out.as_ref(), &text);
    }
    let other = evaluate_runs(&load_all(&args.compare_pred)?)?;
    let cmp = compare_runs(
        &report.aggregate,
        &other.aggregate,
        (&args.labels.0, &args.labels.1),
    )?;
    let text = match args.format {
        Format::Text => cmp.to_text(),
        Format::Csv => cmp.to_csv(),
        Format::Json => {
            let doc = serde_json::json!({ "a": report, "b": other, "comparison": cmp });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
    };
    crate::emit(args.out.as_ref(), &text)
}
