use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use triage_core::classifier::{classify_baseline, extract_features, RemoteClassifier, Thresholds};
use triage_core::dataset::{
    export_training_manifest, make_split, sample_balanced_clips, Corpus, SampledClips, Split, SplitPlan,
    TrainingManifest, DEFAULT_MIN_SPACING,
};
use triage_core::eval::{write_predictions, PredictionRecord};
use triage_core::model::DamageStatus;
use triage_core::windower::DEFAULT_CONTEXT;

#[derive(Subcommand)]
pub enum DatasetCommand {
    /// Sample a class-balanced clip set and split it 8:1:1.
    Build(BuildArgs),
    /// Reassign the clips of an existing split file with a new seed.
    Split(SplitArgs),
    /// Write clip directories and the training manifest.
    Export(ExportArgs),
    /// Classify the clips of one split and write a prediction CSV.
    Predict(PredictArgs),
}

#[derive(Args)]
pub struct Root {
    /// Dataset root holding manifest.csv, annotations/ and frames/.
    #[arg(long)]
    root: PathBuf,
}

#[derive(Args)]
pub struct BuildArgs {
    #[command(flatten)]
    root: Root,
    /// Clips per class; a positive multiple of 10.
    #[arg(long, default_value_t = 1000)]
    quota: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minimum frame distance between two anchors on one track.
    #[arg(long, default_value_t = DEFAULT_MIN_SPACING)]
    min_spacing: u64,
    /// Split file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    #[command(flatten)]
    root: Root,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ExportArgs {
    #[command(flatten)]
    root: Root,
    #[arg(long)]
    plan: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Manifest override as `key=value`; repeatable.
    #[arg(long = "set", value_parser = parse_key_value)]
    overrides: Vec<(String, String)>,
    #[arg(long, default_value_t = DEFAULT_CONTEXT)]
    context: f64,
    /// Side of the exported frames; leave room above `input_side` for random crops.
    #[arg(long, default_value_t = 128)]
    clip_side: u32,
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    root: Root,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Remote classifier as `host:port`; the built-in baseline when absent.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 1000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_CONTEXT)]
    context: f64,
    #[arg(long, default_value_t = 112)]
    clip_side: u32,
    /// Prediction CSV to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

fn load_corpus(root: &Root) -> Result<Corpus> {
    Corpus::load(&root.root).with_context(|| format!("loading dataset {}", root.root.display()))
}

fn load_plan(path: &Path) -> Result<SplitPlan> {
    SplitPlan::load(path).with_context(|| format!("loading {}", path.display()))
}

fn summarize(plan: &SplitPlan) {
    let counts = plan.counts();
    println!("{:<14} {:>7} {:>7} {:>7}", "class", "train", "val", "test");
    for s in DamageStatus::ALL {
        let [tr, va, te] = counts[s.index()];
        println!("{:<14} {tr:>7} {va:>7} {te:>7}", s.as_str());
    }
}

pub fn run(cmd: DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::Build(a) => {
            let corpus = load_corpus(&a.root)?;
            let sampled = sample_balanced_clips(&corpus.tracks, &corpus.videos, a.quota, a.seed, a.min_spacing)?;
            let plan = make_split(&sampled, &corpus.videos, a.seed)?;
            plan.save(&a.out)?;
            summarize(&plan);
            Ok(())
        }
        DatasetCommand::Split(a) => {
            let corpus = load_corpus(&a.root)?;
            let old = load_plan(&a.plan)?;
            let mut by_class: BTreeMap<DamageStatus, Vec<_>> = BTreeMap::new();
            for (key, entry) in &old.entries {
                by_class.entry(entry.label).or_default().push(key.clone());
            }
            let sampled = SampledClips {
                seed: a.seed,
                quota: old.quota,
                min_spacing: old.min_spacing,
                by_class,
            };
            let plan = make_split(&sampled, &corpus.videos, a.seed)?;
            plan.save(&a.out)?;
            summarize(&plan);
            Ok(())
        }
        DatasetCommand::Export(a) => {
            let corpus = load_corpus(&a.root)?;
            let plan = load_plan(&a.plan)?;
            let manifest =
                TrainingManifest::with_overrides(a.overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
            export_training_manifest(&plan, &manifest, &a.out, |k| corpus.clip(k, a.context, a.clip_side))?;
            println!("{} clips exported to {}", plan.len(), a.out.display());
            Ok(())
        }
        DatasetCommand::Predict(a) => predict(a),
    }
}

fn predict(a: PredictArgs) -> Result<()> {
    let corpus = load_corpus(&a.root)?;
    let plan = load_plan(&a.plan)?;
    let thresholds = Thresholds::default();
    let mut remote = a
        .endpoint
        .as_ref()
        .map(|e| RemoteClassifier::new(e.clone(), Duration::from_millis(a.timeout_ms)));
    let mut records = Vec::new();
    for (key, label) in plan.keys_in(a.split) {
        let clip = corpus.clip(key, a.context, a.clip_side)?;
        let out = match remote.as_mut() {
            Some(r) => r.classify(&clip).with_context(|| format!("classifying {key}"))?,
            None => classify_baseline(&extract_features(&clip), &thresholds)?,
        };
        records.push(PredictionRecord {
            key: key.clone(),
            true_label: label,
            predicted: out.predicted,
        });
    }
    if records.is_empty() {
        bail!("no {} clips in {}", a.split.as_str(), a.plan.display());
    }
    let mut buf = Vec::new();
    write_predictions(&records, &mut buf)?;
    crate::emit(a.out.as_ref(), &String::from_utf8(buf)?)?;
    log::info!("{} {} clips classified", records.len(), a.split.as_str());
    Ok(())
}
