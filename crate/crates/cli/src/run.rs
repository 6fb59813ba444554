use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use triage_pipeline::bus::{Delivery, Subscription};
use triage_pipeline::{start_pipeline_from_config, BusEvent, PipelineConfig, SubscribeFrom, Topic};

#[derive(Args)]
pub struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the synthetic source seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `gateway_bind`.
    #[arg(long)]
    bind: Option<String>,
    /// Append every published record (results and alarms) here as NDJSON.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Keep the gateway serving after the source ends, until interrupted.
    #[arg(long)]
    hold: bool,
}

fn spawn_writer(sub: Subscription, out: Arc<Mutex<BufWriter<File>>>) -> JoinHandle<std::io::Result<()>> {
    std::thread::spawn(move || loop {
        match sub.recv_timeout(Duration::from_millis(200)) {
            Delivery::Idle => continue,
            Delivery::Event(ev) => match ev.as_ref() {
                BusEvent::Record(r) => {
                    let mut w = out.lock().expect("records writer");
                    writeln!(w, "{}", r.to_line())?;
                }
                BusEvent::EndOfStream => return Ok(()),
                _ => {}
            },
            Delivery::SlowConsumer => {
                log::warn!("record writer fell behind on {}; output is incomplete", sub.topic().as_str());
                return Ok(());
            }
            Delivery::Closed => return Ok(()),
        }
    })
}

pub fn run(args: RunArgs) -> Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    if args.bind.is_some() {
        config.gateway_bind = args.bind.clone();
    }
    config.validate()?;

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = interrupted.clone();
        ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)).context("installing interrupt handler")?;
    }

    let mut run = start_pipeline_from_config(config)?;
    let mut writers = Vec::new();
    let mut sink = None;
    if let Some(path) = &args.records {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let out = Arc::new(Mutex::new(BufWriter::new(file)));
        for topic in [Topic::Results, Topic::Alarms] {
            writers.push(spawn_writer(run.bus().subscribe(topic, SubscribeFrom::All), out.clone()));
        }
        sink = Some(out);
    }

    while !run.is_finished() {
        if interrupted.load(Ordering::SeqCst) {
            log::info!("interrupted; draining");
            run.stop();
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    let metrics = run.wait()?;
    for w in writers {
        w.join().expect("record writer panicked")?;
    }
    if let Some(out) = sink {
        out.lock().expect("records writer").flush()?;
    }
    println!("{}", serde_json::to_string_pretty(&metrics)?);

    if args.hold && run.gateway_addr().is_some() && !interrupted.load(Ordering::SeqCst) {
        log::info!("source finished; gateway still serving, interrupt to exit");
        while !interrupted.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(100));
        }
    }
    Ok(())
}
