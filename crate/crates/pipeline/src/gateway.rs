//! HTTP bridge for the operator console.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/tracks` | JSON array of live tracks |
//! | GET | `/api/stream?from=latest\|all` | NDJSON `ResultRecord`s until the run ends |
//! | GET | `/api/frame/latest` | JSON with a base64 PNG and the frame's records |
//! | POST | `/api/tracks/{id}/override` | `{"status": .., "operator": ..}` |
//! | DELETE | `/api/tracks/{id}/override` | optional `?operator=` |
//! | GET | `/api/metrics` | metrics snapshot |
//!
//! Errors are `{"error": <code>, "message": ..}` with 400, 404 or 409.

use std::convert::Infallible;
use std::io::Cursor;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{mpsc, oneshot};

use crate::board::{parse_override_status, OverrideError, StatusBoard};
use crate::bus::{BusEvent, Delivery, SubscribeFrom, Topic};
use crate::run::Probe;
use crate::PipelineError;

/// Alarm records this many frames older than the latest frame still show
/// in `/api/frame/latest`.
const ALARM_WINDOW_FRAMES: u64 = 15;
const BRIDGE_POLL: Duration = Duration::from_millis(200);

#[derive(Clone)]
struct AppState {
    board: Arc<StatusBoard>,
    probe: Arc<Probe>,
}

/// Running gateway; dropping it without [`Gateway::shutdown`] leaves the
/// server thread running until process exit.
pub struct Gateway {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Gateway {
    pub(crate) fn start(bind: &str, board: Arc<StatusBoard>, probe: Arc<Probe>) -> Result<Gateway, PipelineError> {
        let bind_err = |source| PipelineError::Bind {
            addr: bind.to_string(),
            source,
        };
        let listener = std::net::TcpListener::bind(bind).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        let addr = listener.local_addr().map_err(bind_err)?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("triage-gateway")
            .enable_all()
            .build()
            .map_err(bind_err)?;
        let app = router(AppState { board, probe });
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name("triage-gateway".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            log::error!("gateway listener: {e}");
                            return;
                        }
                    };
                    tokio::select! {
                        r = axum::serve(listener, app) => {
                            if let Err(e) = r {
                                log::error!("gateway stopped: {e}");
                            }
                        }
                        _ = stop_rx => {}
                    }
                });
                runtime.shutdown_background();
            })
            .map_err(bind_err)?;
        log::info!("gateway listening on http://{addr}");
        Ok(Gateway {
            addr,
            stop: Some(stop_tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting requests and drops open connections.
    pub fn shutdown(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/tracks", get(list_tracks))
        .route("/api/stream", get(stream))
        .route("/api/frame/latest", get(latest_frame))
        .route("/api/tracks/{id}/override", post(set_override).delete(clear_override))
        .route("/api/metrics", get(metrics))
        .with_state(state)
}

fn error(status: StatusCode, code: &str, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": code, "message": message.to_string() }))).into_response()
}

fn override_error(e: OverrideError) -> Response {
    let status = match e {
        OverrideError::UnknownTrack(_) => StatusCode::NOT_FOUND,
        OverrideError::InvalidStatus(_) => StatusCode::BAD_REQUEST,
        OverrideError::Closed => StatusCode::CONFLICT,
    };
    error(status, e.code(), &e)
}

async fn list_tracks(State(s): State<AppState>) -> Response {
    Json(s.board.tracks()).into_response()
}

async fn metrics(State(s): State<AppState>) -> Response {
    Json(s.probe.snapshot()).into_response()
}

async fn latest_frame(State(s): State<AppState>) -> Response {
    let Some(latest) = s.board.latest_frame(ALARM_WINDOW_FRAMES) else {
        return error(StatusCode::NOT_FOUND, "NoFrame", "no frame published yet");
    };
    let mut png = Vec::new();
    if let Err(e) = latest.image.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "Encode", e);
    }
    Json(json!({
        "video_id": latest.frame.video_id,
        "frame_index": latest.frame.frame_index,
        "timestamp_ms": latest.frame.timestamp_ms,
        "width": latest.image.width(),
        "height": latest.image.height(),
        "png_base64": base64::engine::general_purpose::STANDARD.encode(&png),
        "records": latest.records,
    }))
    .into_response()
}

#[derive(Deserialize)]
struct OverrideBody {
    status: String,
    operator: String,
}

fn bad_track_id(id: &str) -> Response {
    error(StatusCode::BAD_REQUEST, "BadRequest", format!("track id {id:?} is not an integer"))
}

async fn set_override(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let Ok(track_id) = id.parse::<u64>() else {
        return bad_track_id(&id);
    };
    let body: OverrideBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "BadRequest", e),
    };
    let status = match parse_override_status(&body.status) {
        Ok(st) => st,
        Err(e) => return override_error(e),
    };
    match s.board.apply_override(track_id, Some(status), &body.operator) {
        Ok(record) => Json(record).into_response(),
        Err(e) => override_error(e),
    }
}

#[derive(Deserialize)]
struct ClearQuery {
    operator: Option<String>,
}

async fn clear_override(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ClearQuery>,
) -> Response {
    let Ok(track_id) = id.parse::<u64>() else {
        return bad_track_id(&id);
    };
    let operator = q.operator.unwrap_or_else(|| "operator".into());
    match s.board.apply_override(track_id, None, &operator) {
        Ok(record) => Json(record).into_response(),
        Err(e) => override_error(e),
    }
}

#[derive(Deserialize)]
struct StreamQuery {
    from: Option<String>,
}

async fn stream(State(s): State<AppState>, Query(q): Query<StreamQuery>) -> Response {
    let from = match q.from.as_deref() {
        None | Some("latest") => SubscribeFrom::Latest,
        Some("all") => SubscribeFrom::All,
        Some(other) => return error(StatusCode::BAD_REQUEST, "BadRequest", format!("from={other}")),
    };
    let (tx, rx) = mpsc::channel::<Bytes>(256);
    for topic in [Topic::Results, Topic::Alarms] {
        let sub = s.board.bus().subscribe(topic, from);
        let tx = tx.clone();
        std::thread::Builder::new()
            .name("triage-stream".into())
            .spawn(move || loop {
                if tx.is_closed() {
                    return;
                }
                match sub.recv_timeout(BRIDGE_POLL) {
                    Delivery::Idle => continue,
                    Delivery::Event(ev) => match ev.as_ref() {
                        BusEvent::Record(r) => {
                            let mut line = r.to_line();
                            line.push('\n');
                            if tx.blocking_send(Bytes::from(line)).is_err() {
                                return;
                            }
                        }
                        BusEvent::EndOfStream => return,
                        _ => {}
                    },
                    Delivery::SlowConsumer | Delivery::Closed => return,
                }
            })
            .expect("spawn stream bridge");
    }
    drop(tx);
    let body = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(body))
        .expect("static response parts")
}
