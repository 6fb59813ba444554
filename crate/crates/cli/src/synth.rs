use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use triage_core::ingest::synthetic::corpus_scripts;
use triage_core::ingest::{parse_manifest, write_manifest, Archetype, DatasetLayout, SyntheticScene, SyntheticScript};

#[derive(Args)]
pub struct SynthArgs {
    /// Scene script (TOML); repeatable.
    #[arg(long = "script", conflicts_with = "per_pattern")]
    scripts: Vec<PathBuf>,
    /// Instead of scripts, generate this many videos for each of the five patterns.
    #[arg(long)]
    per_pattern: Option<usize>,
    /// Frames per generated video.
    #[arg(long, default_value_t = 120)]
    frames: u64,
    #[arg(long, default_value_t = 384)]
    width: u32,
    #[arg(long, default_value_t = 216)]
    height: u32,
    /// Actors per generated video.
    #[arg(long, value_delimiter = ',', value_parser = parse_archetype,
          default_value = "stander,walker,runner,waver,prone")]
    cast: Vec<Archetype>,
    /// Dataset root; an existing manifest is extended, same-id videos replaced.
    #[arg(long)]
    out: PathBuf,
    /// Replaces the script seeds; the i-th script gets `seed + i`.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_archetype(s: &str) -> Result<Archetype, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown archetype {s:?}"))
}

pub fn run(args: SynthArgs) -> Result<()> {
    let scripts: Vec<SyntheticScript> = match args.per_pattern {
        Some(n) => corpus_scripts(
            args.seed.unwrap_or(0),
            n,
            args.frames,
            (args.width, args.height),
            &args.cast,
        )?,
        None => {
            if args.scripts.is_empty() {
                bail!("give --script or --per-pattern");
            }
            let mut out = Vec::new();
            for (i, path) in args.scripts.iter().enumerate() {
                let mut s = SyntheticScript::load(path).with_context(|| format!("loading {}", path.display()))?;
                if let Some(seed) = args.seed {
                    s.seed = seed.wrapping_add(i as u64);
                }
                out.push(s);
            }
            out
        }
    };

    let layout = DatasetLayout::new(&args.out);
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut manifest = BTreeMap::new();
    if layout.manifest().exists() {
        for v in parse_manifest(layout.manifest())? {
            manifest.insert(v.video_id.clone(), v);
        }
    }
    for script in scripts {
        let scene = SyntheticScene::new(script)?;
        let meta = scene.meta().clone();
        log::info!(
            "{}: pattern {}, {} frames, {} tracks",
            meta.video_id,
            meta.pattern,
            meta.frame_count,
            scene.tracks().len()
        );
        scene.write_to(&layout)?;
        manifest.insert(meta.video_id.clone(), meta);
    }
    let videos: Vec<_> = manifest.into_values().collect();
    let path = layout.manifest();
    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_manifest(&videos, file)?;
    println!("{} video(s) in {}", videos.len(), args.out.display());
    Ok(())
}
