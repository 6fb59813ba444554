//! Stage threads and the run handle.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender};
use image::RgbImage;
use log::{debug, info, warn};
use triage_core::classifier::{
    classify_baseline, extract_features, ClassifierError, ClassifierOutput, RemoteClassifier, Thresholds,
};
use triage_core::ingest::{open_frame_source, Frame, FrameSource};
use triage_core::ingest::synthetic::SyntheticScene;
use triage_core::ingest::{parse_annotations, parse_manifest, DatasetLayout, SyntheticScript, Track};
use triage_core::model::{BBox, DamageStatus, FrameRef};
use triage_core::windower::{compute_crop_window, crop_and_resize, Clip, ANCHOR_OFFSET, CLIP_LEN};

use crate::alarms::AlarmSchedule;
use crate::board::{ClassifiedClip, StatusBoard};
use crate::bus::{Bus, BusEvent, Topic};
use crate::config::{ClassifierKind, PipelineConfig};
use crate::gateway::Gateway;
use crate::metrics::{Metrics, MetricsSnapshot, QueueDepths};
use crate::queue::{Admission, FrameQueue};
use crate::record::{RecordSource, ResultRecord};
use crate::PipelineError;

/// Frame and track sources for one run.
pub struct PipelineInput {
    pub source: Box<dyn FrameSource>,
    pub tracks: Vec<Track>,
    pub alarms: AlarmSchedule,
}

struct Captured {
    frame: Frame,
    at: Instant,
}

struct ClipJob {
    seq: u64,
    video_id: String,
    track_id: u64,
    frames: Vec<Arc<RgbImage>>,
    indices: Vec<u64>,
    boxes: Vec<BBox>,
    label: DamageStatus,
    newest: FrameRef,
    captured: Instant,
}

struct Classified {
    seq: u64,
    clip: ClassifiedClip,
    result: Result<ClassifierOutput, ClassifierError>,
}

#[derive(Clone)]
enum Engine {
    Baseline(Thresholds),
    Remote { endpoint: String, timeout: Duration, side: Option<u32> },
}

/// Live run: stage threads, bus, status board and optional gateway.
pub struct RunHandle {
    bus: Bus,
    board: Arc<StatusBoard>,
    probe: Arc<Probe>,
    stop: Arc<AtomicBool>,
    threads: Vec<(&'static str, JoinHandle<()>)>,
    error: Arc<Mutex<Option<PipelineError>>>,
    gateway: Option<Gateway>,
}

/// Everything needed to take a metrics snapshot from any thread.
pub(crate) struct Probe {
    metrics: Arc<Metrics>,
    frames: Arc<FrameQueue<Captured>>,
    clips: Receiver<ClipJob>,
    classified: Receiver<Classified>,
    bus: Bus,
}

impl Probe {
    pub(crate) fn snapshot(&self) -> MetricsSnapshot {
        let counts = self.frames.counts();
        let depths = QueueDepths {
            frames: counts.queued,
            clips: self.clips.len() as u64,
            classified: self.classified.len() as u64,
        };
        self.metrics.snapshot(counts, depths, self.bus.slow_consumers())
    }
}

impl RunHandle {
    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn board(&self) -> &Arc<StatusBoard> {
        &self.board
    }

    pub fn metrics_snapshot(&self) -> MetricsSnapshot {
        self.probe.snapshot()
    }

    /// Address the gateway is listening on, if one was configured.
    pub fn gateway_addr(&self) -> Option<std::net::SocketAddr> {
        self.gateway.as_ref().map(Gateway::addr)
    }

    /// Stops reading the source. Frames and clips already in flight drain
    /// and publish before the terminal marker.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_finished(&self) -> bool {
        self.threads.iter().all(|(_, t)| t.is_finished())
    }

    /// Joins every stage and returns the final metrics. The gateway keeps
    /// serving until the handle is dropped.
    pub fn wait(&mut self) -> Result<MetricsSnapshot, PipelineError> {
        for (stage, t) in self.threads.drain(..) {
            if t.join().is_err() {
                self.error.lock().expect("error slot").get_or_insert(PipelineError::Stage {
                    stage,
                    message: "thread panicked".into(),
                });
                self.bus.close();
            }
        }
        let snapshot = self.probe.snapshot();
        match self.error.lock().expect("error slot").take() {
            Some(e) => Err(e),
            None => Ok(snapshot),
        }
    }
}

impl Drop for RunHandle {
    fn drop(&mut self) {
        self.stop();
        if let Some(g) = self.gateway.take() {
            g.shutdown();
        }
    }
}

fn engine(config: &PipelineConfig) -> Result<Engine, PipelineError> {
    Ok(match config.classifier {
        ClassifierKind::Baseline => Engine::Baseline(config.thresholds),
        ClassifierKind::Remote => Engine::Remote {
            endpoint: config
                .remote_endpoint
                .clone()
                .ok_or_else(|| PipelineError::Config("remote classifier needs remote_endpoint".into()))?,
            timeout: config.remote_timeout(),
            side: config.remote_side,
        },
    })
}

fn spawn(name: &'static str, f: impl FnOnce() + Send + 'static) -> (&'static str, JoinHandle<()>) {
    let t = std::thread::Builder::new()
        .name(format!("triage-{name}"))
        .spawn(f)
        .expect("spawn stage thread");
    (name, t)
}

/// Starts all stages and, when `gateway_bind` is set, the HTTP gateway.
pub fn start_pipeline(config: PipelineConfig, input: PipelineInput) -> Result<RunHandle, PipelineError> {
    config.validate()?;
    let engine = engine(&config)?;
    let bus = Bus::new(config.bus_history, config.subscriber_buffer);
    let metrics = Arc::new(Metrics::new());
    let board = Arc::new(StatusBoard::new(
        bus.clone(),
        metrics.clone(),
        config.smoothing_window,
        config.track_expiry(),
    ));
    let frames = Arc::new(FrameQueue::new(config.frame_queue_capacity, config.drop_policy));
    let (clip_tx, clip_rx) = bounded::<ClipJob>(config.clip_queue_capacity);
    let (done_tx, done_rx) = bounded::<Classified>(config.result_queue_capacity);
    let probe = Arc::new(Probe {
        metrics: metrics.clone(),
        frames: frames.clone(),
        clips: clip_rx.clone(),
        classified: done_rx.clone(),
        bus: bus.clone(),
    });

    let gateway = match &config.gateway_bind {
        Some(addr) => Some(Gateway::start(addr, board.clone(), probe.clone())?),
        None => None,
    };

    let stop = Arc::new(AtomicBool::new(false));
    let error = Arc::new(Mutex::new(None));
    let PipelineInput { source, tracks, alarms } = input;
    let meta = source.meta().clone();
    let mut threads = Vec::new();

    {
        let frames = frames.clone();
        let stop = stop.clone();
        let error = error.clone();
        let board = board.clone();
        let pace = config.pace_fps;
        threads.push(spawn("source", move || {
            run_source(source, frames, alarms, board, pace, stop, error)
        }));
    }
    {
        let frames = frames.clone();
        let metrics = metrics.clone();
        let stride = config.clip_stride;
        threads.push(spawn("window", move || run_window(frames, tracks, clip_tx, metrics, stride)));
    }
    for _ in 0..config.classifier_workers {
        let clips = clip_rx.clone();
        let done = done_tx.clone();
        let engine = engine.clone();
        let (context, out_side) = (config.context, config.out_side);
        threads.push(spawn("classify", move || run_classifier(clips, done, engine, context, out_side)));
    }
    drop(done_tx);
    drop(clip_rx);
    {
        let board = board.clone();
        let metrics = metrics.clone();
        threads.push(spawn("smooth", move || run_smoother(done_rx, board, metrics)));
    }
    if config.metrics_interval_ms > 0 {
        let probe = probe.clone();
        let interval = Duration::from_millis(config.metrics_interval_ms);
        threads.push(spawn("metrics", move || run_ticker(probe, interval)));
    }
    info!(
        "pipeline started on {} ({}x{}, {} frames)",
        meta.video_id, meta.width, meta.height, meta.frame_count
    );

    Ok(RunHandle {
        bus,
        board,
        probe,
        stop,
        threads,
        error,
        gateway,
    })
}

/// Builds the sources a config names and starts the run.
pub fn start_pipeline_from_config(config: PipelineConfig) -> Result<RunHandle, PipelineError> {
    let alarms = match &config.alarm_schedule {
        Some(p) => AlarmSchedule::load(p)?,
        None => AlarmSchedule::default(),
    };
    let src_err = |e: &dyn std::fmt::Display| PipelineError::Source(e.to_string());
    let input = if let Some(path) = &config.source_script {
        let mut script = SyntheticScript::load(path).map_err(|e| src_err(&e))?;
        if let Some(seed) = config.seed {
            script.seed = seed;
        }
        let scene = Arc::new(SyntheticScene::new(script).map_err(|e| src_err(&e))?);
        PipelineInput {
            tracks: scene.tracks().to_vec(),
            source: Box::new(scene.frames()),
            alarms,
        }
    } else if let Some(root) = &config.source_dataset {
        let layout = DatasetLayout::new(root);
        let video_id = config.source_video.as_deref().unwrap_or_default();
        let videos = parse_manifest(layout.manifest()).map_err(|e| src_err(&e))?;
        let meta = videos
            .into_iter()
            .find(|v| v.video_id == video_id)
            .ok_or_else(|| PipelineError::Source(format!("video {video_id:?} not in manifest")))?;
        let tracks = parse_annotations(layout.annotations(video_id), &meta).map_err(|e| src_err(&e))?;
        let source = open_frame_source(&meta, layout.frames(video_id)).map_err(|e| src_err(&e))?;
        PipelineInput {
            source: Box::new(source),
            tracks,
            alarms,
        }
    } else {
        return Err(PipelineError::Config("set source_script or source_dataset".into()));
    };
    start_pipeline(config, input)
}

fn run_source(
    mut source: Box<dyn FrameSource>,
    frames: Arc<FrameQueue<Captured>>,
    alarms: AlarmSchedule,
    board: Arc<StatusBoard>,
    pace_fps: Option<f64>,
    stop: Arc<AtomicBool>,
    error: Arc<Mutex<Option<PipelineError>>>,
) {
    let start = Instant::now();
    let mut n = 0u64;
    while !stop.load(Ordering::SeqCst) {
        if let Some(fps) = pace_fps {
            let due = start + Duration::from_secs_f64(n as f64 / fps);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let frame = match source.next() {
            None => break,
            Some(Ok(f)) => f,
            Some(Err(e)) => {
                warn!("source failed at frame {n}: {e}");
                error.lock().expect("error slot").get_or_insert(PipelineError::Stage {
                    stage: "source",
                    message: format!("frame {n}: {e}"),
                });
                break;
            }
        };
        n += 1;
        let at = Instant::now();
        let fr = frame.frame_ref.clone();
        for alarm in alarms.at(fr.frame_index) {
            board.publish_alarm(ResultRecord {
                video_id: fr.video_id.clone(),
                frame_index: fr.frame_index,
                timestamp_ms: fr.timestamp_ms,
                track_id: 0,
                bbox: alarm.bbox,
                category: alarm.category,
                confidence: alarm.confidence,
                source: RecordSource::Auto,
                publish_latency_ms: at.elapsed().as_secs_f64() * 1e3,
            });
        }
        match frames.admit(fr.frame_index, Captured { frame, at }) {
            Admission::Admitted => {}
            Admission::Evicted(idx) => debug!("dropped frame {idx}"),
            Admission::Closed => break,
        }
    }
    frames.close();
}

struct RunState {
    last: u64,
    len: usize,
    recent: VecDeque<(u64, BBox, DamageStatus)>,
}

fn run_window(
    frames: Arc<FrameQueue<Captured>>,
    tracks: Vec<Track>,
    clips: Sender<ClipJob>,
    metrics: Arc<Metrics>,
    stride: u64,
) {
    let mut by_frame: HashMap<u64, Vec<(u64, BBox, DamageStatus)>> = HashMap::new();
    for t in &tracks {
        for a in &t.annotations {
            by_frame.entry(a.frame_index).or_default().push((t.track_id, a.bbox, a.status));
        }
    }
    drop(tracks);
    let mut cache: VecDeque<(u64, Arc<RgbImage>)> = VecDeque::with_capacity(CLIP_LEN);
    let mut runs: HashMap<u64, RunState> = HashMap::new();
    let mut seq = 0u64;

    while let Some((f, Captured { frame, at })) = frames.pop() {
        if cache.len() == CLIP_LEN {
            cache.pop_front();
        }
        cache.push_back((f, frame.image.clone()));
        let Some(anns) = by_frame.remove(&f) else { continue };
        for (track_id, bbox, status) in anns {
            let run = runs.entry(track_id).or_insert(RunState {
                last: f,
                len: 0,
                recent: VecDeque::with_capacity(CLIP_LEN),
            });
            if run.len > 0 && run.last + 1 != f {
                run.len = 0;
                run.recent.clear();
            }
            run.last = f;
            run.len += 1;
            if run.recent.len() == CLIP_LEN {
                run.recent.pop_front();
            }
            run.recent.push_back((f, bbox, status));
            // Tracks that appear together would otherwise all emit on the
            // same frame; offsetting each by its id spreads the work.
            if run.len < CLIP_LEN || (run.len - CLIP_LEN) as u64 % stride != track_id % stride {
                continue;
            }
            // A consecutive run of CLIP_LEN means the last CLIP_LEN processed
            // frames are exactly the clip's frames.
            let images: Vec<Arc<RgbImage>> = cache.iter().map(|(_, img)| img.clone()).collect();
            debug_assert!(cache.iter().map(|(i, _)| *i).eq(run.recent.iter().map(|r| r.0)));
            let job = ClipJob {
                seq,
                video_id: frame.frame_ref.video_id.clone(),
                track_id,
                frames: images,
                indices: run.recent.iter().map(|r| r.0).collect(),
                boxes: run.recent.iter().map(|r| r.1).collect(),
                label: run.recent[ANCHOR_OFFSET as usize].2,
                newest: frame.frame_ref.clone(),
                captured: at,
            };
            seq += 1;
            Metrics::inc(&metrics.clips_emitted);
            if clips.send(job).is_err() {
                return;
            }
        }
        runs.retain(|_, r| r.last + 1 >= f);
    }
}

fn build_clip(job: &ClipJob, context: f64, out_side: u32) -> Clip {
    let anchor = job.boxes[ANCHOR_OFFSET as usize];
    let first = &job.frames[0];
    let window = compute_crop_window(anchor, first.width(), first.height(), context);
    Clip {
        video_id: job.video_id.clone(),
        track_id: job.track_id,
        anchor_frame_index: job.indices[ANCHOR_OFFSET as usize],
        window,
        label: job.label,
        frames: job.frames.iter().map(|f| crop_and_resize(f, window, out_side)).collect(),
        source_frame_indices: job.indices.clone(),
        source_boxes: job.boxes.clone(),
    }
}

fn run_classifier(
    clips: Receiver<ClipJob>,
    done: Sender<Classified>,
    engine: Engine,
    context: f64,
    out_side: u32,
) {
    let mut remote = match &engine {
        Engine::Remote { endpoint, timeout, side } => {
            let r = RemoteClassifier::new(endpoint.clone(), *timeout);
            Some(match side {
                Some(s) => r.with_side(*s),
                None => r,
            })
        }
        Engine::Baseline(_) => None,
    };
    for job in clips {
        let start = Instant::now();
        let clip = build_clip(&job, context, out_side);
        let result = match (&engine, remote.as_mut()) {
            (Engine::Baseline(t), _) => classify_baseline(&extract_features(&clip), t).map(|mut o| {
                o.latency_ms = start.elapsed().as_secs_f64() * 1e3;
                o
            }),
            (Engine::Remote { .. }, Some(r)) => r.classify(&clip),
            (Engine::Remote { .. }, None) => unreachable!("remote engine has a client"),
        };
        let out = Classified {
            seq: job.seq,
            clip: ClassifiedClip {
                bbox: *job.boxes.last().expect("clip has boxes"),
                image: job.frames.last().expect("clip has frames").clone(),
                frame: job.newest,
                track_id: job.track_id,
                captured: job.captured,
                output: ClassifierOutput::from_probabilities([0.0; 4], 0.0),
            },
            result,
        };
        if done.send(out).is_err() {
            return;
        }
    }
}

const PRUNE_EVERY: Duration = Duration::from_secs(1);

fn run_smoother(done: Receiver<Classified>, board: Arc<StatusBoard>, metrics: Arc<Metrics>) {
    let mut pending: BTreeMap<u64, Classified> = BTreeMap::new();
    let mut next = 0u64;
    let mut last_prune = Instant::now();
    for c in done {
        pending.insert(c.seq, c);
        while let Some(c) = pending.remove(&next) {
            next += 1;
            match c.result {
                Ok(output) => {
                    Metrics::inc(&metrics.clips_classified);
                    board.publish_auto(ClassifiedClip { output, ..c.clip });
                }
                Err(e) => {
                    Metrics::inc(&metrics.clip_failures);
                    if matches!(e, ClassifierError::Timeout | ClassifierError::Connect(_)) {
                        Metrics::inc(&metrics.remote_timeouts);
                    }
                    debug!("clip {} of track {} failed: {e}", c.seq, c.clip.track_id);
                }
            }
        }
        if last_prune.elapsed() >= PRUNE_EVERY {
            board.prune_expired();
            last_prune = Instant::now();
        }
    }
    metrics.mark_finished();
    board.bus().close();
    info!("pipeline finished");
}

fn run_ticker(probe: Arc<Probe>, interval: Duration) {
    let step = Duration::from_millis(20).min(interval);
    let mut due = Instant::now() + interval;
    while !probe.bus.is_closed() {
        std::thread::sleep(step);
        if Instant::now() >= due {
            let snap = probe.snapshot();
            if probe.bus.publish(Topic::Metrics, BusEvent::Metrics(Box::new(snap))).is_err() {
                break;
            }
            due += interval;
        }
    }
}
