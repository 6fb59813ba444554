use std::io::{BufRead, BufReader};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};
use triage_core::ingest::synthetic::lane_script;
use triage_core::ingest::{Archetype, SyntheticScene};
use triage_pipeline::alarms::AlarmSchedule;
use triage_pipeline::{start_pipeline, PipelineConfig, PipelineError, PipelineInput, RecordSource, ResultRecord, RunHandle};
use ureq::Agent;

const FIELDS: [&str; 9] = [
    "video_id",
    "frame_index",
    "timestamp_ms",
    "track_id",
    "bbox",
    "category",
    "confidence",
    "source",
    "publish_latency_ms",
];

fn agent() -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into()
}

fn start(pace_fps: f64, frames: u64) -> (RunHandle, Arc<SyntheticScene>, String) {
    let cast = [Archetype::Stander, Archetype::Runner, Archetype::Waver, Archetype::Prone];
    let scene = Arc::new(SyntheticScene::new(lane_script(3, "gw", 384, 216, frames, &cast).unwrap()).unwrap());
    let config = PipelineConfig {
        gateway_bind: Some("127.0.0.1:0".into()),
        pace_fps: Some(pace_fps),
        ..PipelineConfig::default()
    };
    let input = PipelineInput {
        source: Box::new(scene.frames()),
        tracks: scene.tracks().to_vec(),
        alarms: AlarmSchedule::default(),
    };
    let run = start_pipeline(config, input).unwrap();
    let base = format!("http://{}", run.gateway_addr().unwrap());
    (run, scene, base)
}

fn get_json(agent: &Agent, url: &str) -> (u16, Value) {
    let mut resp = agent.get(url).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
}

#[test]
fn gateway_serves_tracks_stream_frame_metrics_and_overrides() {
    let (mut run, scene, base) = start(120.0, 100_000);
    let agent = agent();

    let stream = agent.get(&format!("{base}/api/stream?from=all")).call().unwrap();
    assert_eq!(stream.status().as_u16(), 200);
    assert_eq!(stream.headers()["content-type"], "application/x-ndjson");
    let mut lines = BufReader::new(stream.into_body().into_reader()).lines();

    let first = lines.next().unwrap().unwrap();
    let raw: Value = serde_json::from_str(&first).unwrap();
    let keys: Vec<&str> = raw.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = FIELDS.to_vec();
    expected.sort();
    let mut keys_sorted = keys.clone();
    keys_sorted.sort();
    assert_eq!(keys_sorted, expected);
    let first = ResultRecord::from_line(&first).unwrap();
    assert_eq!(first.source, RecordSource::Auto);

    let deadline = Instant::now() + Duration::from_secs(10);
    let tracks = loop {
        let (code, tracks) = get_json(&agent, &format!("{base}/api/tracks"));
        assert_eq!(code, 200);
        if tracks.as_array().unwrap().len() == 4 || Instant::now() > deadline {
            break tracks;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    let tracks = tracks.as_array().unwrap();
    assert_eq!(tracks.len(), 4);
    for t in tracks {
        assert_eq!(t["source"], "auto");
        assert!(t["override"].is_null());
    }
    let target = scene.tracks()[0].track_id;

    let mut resp = agent
        .post(&format!("{base}/api/tracks/{target}/override"))
        .send_json(json!({"status": "emergency", "operator": "op-7"}))
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let rec: ResultRecord = resp.body_mut().read_json().unwrap();
    assert_eq!((rec.track_id, rec.source), (target, RecordSource::Override));
    assert_eq!(rec.category.as_str(), "emergency");

    let sent = Instant::now();
    loop {
        let r = ResultRecord::from_line(&lines.next().unwrap().unwrap()).unwrap();
        if r.track_id == target && r.source == RecordSource::Override {
            break;
        }
    }
    assert!(sent.elapsed() < Duration::from_secs(1));

    let (_, tracks) = get_json(&agent, &format!("{base}/api/tracks"));
    let row = tracks.as_array().unwrap().iter().find(|t| t["track_id"] == target).unwrap().clone();
    assert_eq!(row["source"], "override");
    assert_eq!(row["status"], "emergency");
    assert_eq!(row["override"]["operator_id"], "op-7");

    let post = |id: &str, body: Value| {
        let mut r = agent.post(&format!("{base}/api/tracks/{id}/override")).send_json(body).unwrap();
        (r.status().as_u16(), r.body_mut().read_json::<Value>().unwrap())
    };
    let (code, body) = post("999", json!({"status": "safe", "operator": "op"}));
    assert_eq!((code, body["error"].as_str()), (404, Some("UnknownTrack")));
    let (code, body) = post(&target.to_string(), json!({"status": "smoke", "operator": "op"}));
    assert_eq!((code, body["error"].as_str()), (400, Some("InvalidStatus")));
    let (code, body) = post(&target.to_string(), json!({"status": "safe"}));
    assert_eq!((code, body["error"].as_str()), (400, Some("BadRequest")));
    let (code, _) = post("abc", json!({"status": "safe", "operator": "op"}));
    assert_eq!(code, 400);

    let mut resp = agent
        .delete(&format!("{base}/api/tracks/{target}/override?operator=op-7"))
        .call()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let rec: ResultRecord = resp.body_mut().read_json().unwrap();
    assert_eq!(rec.source, RecordSource::Auto);
    let resp = agent.delete(&format!("{base}/api/tracks/999/override")).call().unwrap();
    assert_eq!(resp.status().as_u16(), 404);

    let (code, frame) = get_json(&agent, &format!("{base}/api/frame/latest"));
    assert_eq!(code, 200);
    assert_eq!((frame["width"].as_u64(), frame["height"].as_u64()), (Some(384), Some(216)));
    let png = base64::engine::general_purpose::STANDARD
        .decode(frame["png_base64"].as_str().unwrap())
        .unwrap();
    let img = image::load_from_memory(&png).unwrap().to_rgb8();
    let idx = frame["frame_index"].as_u64().unwrap();
    assert_eq!(img, scene.render(idx));
    let recs = frame["records"].as_array().unwrap();
    assert!(!recs.is_empty());
    assert!(recs.iter().all(|r| r["frame_index"].as_u64() == Some(idx)));

    let (code, m) = get_json(&agent, &format!("{base}/api/metrics"));
    assert_eq!(code, 200);
    assert!(m["frames_in"].as_u64().unwrap() > 0);
    assert!(m["latency"]["p95_ms"].is_number());
    assert_eq!(m["latency"]["count"], m["results_published"]);

    run.stop();
    run.wait().unwrap();
    let rest: Vec<String> = lines.map(|l| l.unwrap()).collect();
    for l in &rest {
        ResultRecord::from_line(l).unwrap();
    }
    let (code, body) = post(&target.to_string(), json!({"status": "safe", "operator": "op"}));
    assert_eq!((code, body["error"].as_str()), (409, Some("Closed")));
}

#[test]
fn frame_endpoint_is_404_before_first_result() {
    let (run, _, base) = start(1.0, 100);
    let (code, body) = get_json(&agent(), &format!("{base}/api/frame/latest"));
    assert_eq!((code, body["error"].as_str()), (404, Some("NoFrame")));
    let (code, body) = get_json(&agent(), &format!("{base}/api/tracks"));
    assert_eq!((code, body), (200, json!([])));
    let resp = agent().get(&format!("{base}/api/stream?from=sometimes")).call().unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    drop(run);
}

#[test]
fn occupied_port_is_a_bind_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let scene = Arc::new(SyntheticScene::new(lane_script(1, "b", 96, 48, 4, &[Archetype::Stander]).unwrap()).unwrap());
    let config = PipelineConfig {
        gateway_bind: Some(taken.local_addr().unwrap().to_string()),
        ..PipelineConfig::default()
    };
    let input = PipelineInput {
        source: Box::new(scene.frames()),
        tracks: scene.tracks().to_vec(),
        alarms: AlarmSchedule::default(),
    };
    assert!(matches!(start_pipeline(config, input), Err(PipelineError::Bind { .. })));
}
