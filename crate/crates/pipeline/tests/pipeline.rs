use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use triage_core::classifier::EchoWorker;
use triage_core::ingest::synthetic::lane_script;
use triage_core::ingest::{Archetype, SyntheticScene};
use triage_core::model::{BBox, DamageStatus, SceneCategory};
use triage_pipeline::alarms::{AlarmEntry, AlarmSchedule};
use triage_pipeline::{
    start_pipeline, BusEvent, ClassifierKind, DropPolicy, PipelineConfig, PipelineInput, RecordSource,
    ResultRecord, SubscribeFrom, Topic,
};

const CAST: [Archetype; 4] = [Archetype::Stander, Archetype::Walker, Archetype::Waver, Archetype::Prone];

fn scene(seed: u64, frames: u64, cast: &[Archetype]) -> Arc<SyntheticScene> {
    let script = lane_script(seed, "run", 384, 216, frames, cast).unwrap();
    Arc::new(SyntheticScene::new(script).unwrap())
}

fn input(scene: &Arc<SyntheticScene>, alarms: AlarmSchedule) -> PipelineInput {
    PipelineInput {
        source: Box::new(scene.frames()),
        tracks: scene.tracks().to_vec(),
        alarms,
    }
}

fn block_config() -> PipelineConfig {
    PipelineConfig {
        drop_policy: DropPolicy::Block,
        metrics_interval_ms: 0,
        ..PipelineConfig::default()
    }
}

fn records(events: &[Arc<BusEvent>]) -> Vec<ResultRecord> {
    events
        .iter()
        .filter_map(|e| match e.as_ref() {
            BusEvent::Record(r) => Some(r.clone()),
            _ => None,
        })
        .collect()
}

fn smoke_schedule(frames: &[u64]) -> AlarmSchedule {
    let mut s = AlarmSchedule::default();
    for &f in frames {
        s.insert(
            f,
            AlarmEntry {
                category: SceneCategory::Smoke,
                bbox: BBox::new(300, 150, 40, 30),
                confidence: 0.8,
            },
        );
    }
    s
}

#[test]
fn synthetic_run_ends_on_ground_truth_statuses() {
    let s = scene(5, 64, &CAST);
    let mut run = start_pipeline(block_config(), input(&s, AlarmSchedule::default())).unwrap();
    let sub = run.bus().subscribe(Topic::Results, SubscribeFrom::All);
    let m = run.wait().unwrap();
    let recs = records(&sub.drain_until_end());

    assert_eq!((m.frames_in, m.frames_dropped, m.frames_processed), (64, 0, 64));
    assert!(m.is_conserved());
    assert_eq!(m.clips_classified, m.clips_emitted);
    assert_eq!(m.results_published, m.clips_classified);
    assert_eq!(m.latency.count, m.results_published);
    assert_eq!(recs.len() as u64, m.results_published);

    let mut last: BTreeMap<u64, &ResultRecord> = BTreeMap::new();
    for r in &recs {
        if let Some(prev) = last.get(&r.track_id) {
            assert!(r.frame_index > prev.frame_index);
        }
        assert!((0.0..=1.0).contains(&r.confidence));
        assert_eq!(r.source, RecordSource::Auto);
        last.insert(r.track_id, r);
    }
    assert_eq!(last.len(), 4);
    for track in s.tracks() {
        let truth = track.annotations.last().unwrap().status;
        assert_eq!(last[&track.track_id].category, SceneCategory::from(truth), "track {}", track.track_id);
    }
}

#[test]
fn stop_drains_then_freezes() {
    let s = scene(6, 100_000, &CAST);
    let config = PipelineConfig {
        pace_fps: Some(300.0),
        ..block_config()
    };
    let mut run = start_pipeline(config, input(&s, AlarmSchedule::default())).unwrap();
    let sub = run.bus().subscribe(Topic::Results, SubscribeFrom::All);
    while run.bus().published(Topic::Results) < 8 {
        std::thread::sleep(Duration::from_millis(5));
    }
    run.stop();
    let m = run.wait().unwrap();
    assert!(m.frames_in < 100_000);
    assert!(m.is_conserved());
    assert_eq!(m.frames_queued, 0);
    assert_eq!(m.results_published, m.clips_classified);

    let events = sub.drain_until_end();
    assert_eq!(records(&events).len() as u64, m.results_published);
    assert!(sub.try_recv().is_none());
    std::thread::sleep(Duration::from_millis(30));
    assert_eq!(run.metrics_snapshot(), m);
    assert_eq!(run.bus().published(Topic::Results), m.results_published + 1);
}

#[test]
fn dead_remote_endpoint_times_out_every_clip() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let s = scene(7, 64, &CAST);
    let config = PipelineConfig {
        classifier: ClassifierKind::Remote,
        remote_endpoint: Some(format!("127.0.0.1:{port}")),
        ..block_config()
    };
    let mut run = start_pipeline(config, input(&s, smoke_schedule(&[3, 40]))).unwrap();
    let results = run.bus().subscribe(Topic::Results, SubscribeFrom::All);
    let alarms = run.bus().subscribe(Topic::Alarms, SubscribeFrom::All);
    let m = run.wait().unwrap();
    assert_eq!(m.frames_processed, 64);
    assert!(m.clips_emitted > 0);
    assert_eq!(m.remote_timeouts, m.clips_emitted);
    assert_eq!(m.clip_failures, m.clips_emitted);
    assert_eq!((m.clips_classified, m.results_published), (0, 0));
    assert!(records(&results.drain_until_end()).is_empty());
    let alarms = records(&alarms.drain_until_end());
    assert_eq!(alarms.iter().map(|a| a.frame_index).collect::<Vec<_>>(), [3, 40]);
    assert!(alarms.iter().all(|a| a.track_id == 0 && a.category == SceneCategory::Smoke));
    assert_eq!(m.alarms_published, 2);
}

#[test]
fn echo_worker_results_flow_through() {
    let worker = EchoWorker::fixed([0.1, 0.1, 0.7, 0.1]).unwrap();
    let s = scene(8, 48, &CAST);
    let config = PipelineConfig {
        classifier: ClassifierKind::Remote,
        remote_endpoint: Some(worker.endpoint()),
        remote_side: Some(32),
        ..block_config()
    };
    let mut run = start_pipeline(config, input(&s, AlarmSchedule::default())).unwrap();
    let sub = run.bus().subscribe(Topic::Results, SubscribeFrom::All);
    let m = run.wait().unwrap();
    let recs = records(&sub.drain_until_end());
    assert_eq!(m.clips_classified, m.clips_emitted);
    assert_eq!(worker.served(), m.clips_emitted);
    assert!(!recs.is_empty());
    for r in &recs {
        assert_eq!(r.category, SceneCategory::CallForHelp);
        assert!((r.confidence - 0.7).abs() < 1e-6);
    }
}

#[test]
fn slow_classifier_drops_frames_and_keeps_accounting() {
    let worker = EchoWorker::spawn(|_| {
        std::thread::sleep(Duration::from_millis(15));
        triage_core::classifier::wire::ClipResponse {
            probabilities: [1.0, 0.0, 0.0, 0.0],
            flags: 0,
        }
        .encode()
        .to_vec()
    })
    .unwrap();
    let s = scene(9, 400, &CAST);
    let config = PipelineConfig {
        classifier: ClassifierKind::Remote,
        remote_endpoint: Some(worker.endpoint()),
        remote_side: Some(16),
        classifier_workers: 1,
        frame_queue_capacity: 2,
        clip_queue_capacity: 1,
        drop_policy: DropPolicy::DropOldest,
        metrics_interval_ms: 10,
        ..PipelineConfig::default()
    };
    let mut run = start_pipeline(config, input(&s, AlarmSchedule::default())).unwrap();
    let ticks = run.bus().subscribe(Topic::Metrics, SubscribeFrom::All);
    let results = run.bus().subscribe(Topic::Results, SubscribeFrom::All);
    let mut sampled = 0;
    while !run.is_finished() {
        assert!(run.metrics_snapshot().is_conserved());
        sampled += 1;
        std::thread::sleep(Duration::from_millis(2));
    }
    let m = run.wait().unwrap();
    assert!(sampled > 0);
    assert!(m.frames_dropped > 0, "{m:?}");
    assert_eq!(m.frames_in, 400);
    assert!(m.is_conserved());
    assert_eq!(m.results_published, m.clips_classified);
    assert_eq!(records(&results.drain_until_end()).len() as u64, m.results_published);
    for ev in ticks.drain_until_end() {
        if let BusEvent::Metrics(snap) = ev.as_ref() {
            assert!(snap.is_conserved());
        }
    }
}

#[test]
fn override_is_published_with_precedence() {
    let s = scene(10, 100_000, &CAST);
    let config = PipelineConfig {
        pace_fps: Some(300.0),
        ..block_config()
    };
    let mut run = start_pipeline(config, input(&s, AlarmSchedule::default())).unwrap();
    let sub = run.bus().subscribe(Topic::Results, SubscribeFrom::All);
    let stander = s
        .tracks()
        .iter()
        .find(|t| t.annotations[0].status == DamageStatus::Safe)
        .unwrap()
        .track_id;
    while run.board().tracks().iter().all(|t| t.track_id != stander) {
        std::thread::sleep(Duration::from_millis(5));
    }
    let set = run.board().apply_override(stander, Some(DamageStatus::Emergency), "op-1").unwrap();
    assert_eq!(set.source, RecordSource::Override);
    let before = run.bus().published(Topic::Results);
    while run.bus().published(Topic::Results) < before + 12 {
        std::thread::sleep(Duration::from_millis(5));
    }
    let cleared = run.board().apply_override(stander, None, "op-1").unwrap();
    assert_eq!(cleared.source, RecordSource::Auto);
    let before = run.bus().published(Topic::Results);
    while run.bus().published(Topic::Results) < before + 12 {
        std::thread::sleep(Duration::from_millis(5));
    }
    run.stop();
    let m = run.wait().unwrap();
    assert!(m.auto_suppressed > 0);

    let recs: Vec<ResultRecord> = records(&sub.drain_until_end())
        .into_iter()
        .filter(|r| r.track_id == stander)
        .collect();
    let set_at = recs.iter().position(|r| r.source == RecordSource::Override).unwrap();
    let clear_at = recs.iter().rposition(|r| r.source == RecordSource::Override).unwrap() + 1;
    assert!(recs[set_at..clear_at]
        .iter()
        .all(|r| r.source == RecordSource::Override && r.category == SceneCategory::Emergency));
    assert!(clear_at - set_at >= 2);
    assert!(recs[clear_at..].len() >= 2);
    assert!(recs[clear_at..]
        .iter()
        .all(|r| r.source == RecordSource::Auto && r.category == SceneCategory::Safe));
}
