use std::io::Write;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::wire::{ClipRequest, ClipResponse, FLAG_LOW_CONFIDENCE};
use super::{ClassifierError, ClassifierOutput};
use crate::windower::Clip;

pub const DEFAULT_REMOTE_TIMEOUT: Duration = Duration::from_millis(200);

/// Client for one worker endpoint. Keeps its connection open between calls
/// and reconnects after any failure.
#[derive(Debug)]
pub struct RemoteClassifier {
    endpoint: String,
    timeout: Duration,
    side: Option<u32>,
    conn: Option<TcpStream>,
}

impl RemoteClassifier {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        RemoteClassifier {
            endpoint: endpoint.into(),
            timeout,
            side: None,
            conn: None,
        }
    }

    /// Resize clips to `side` before sending.
    pub fn with_side(mut self, side: u32) -> Self {
        self.side = Some(side);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn connect(&self, deadline: Instant) -> Result<TcpStream, ClassifierError> {
        let addrs: Vec<SocketAddr> = self
            .endpoint
            .to_socket_addrs()
            .map_err(ClassifierError::Connect)?
            .collect();
        let mut last = None;
        for addr in addrs {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ClassifierError::Timeout);
            }
            match TcpStream::connect_timeout(&addr, left) {
                Ok(s) => {
                    s.set_nodelay(true).ok();
                    return Ok(s);
                }
                Err(e) if e.kind() == std::io::ErrorKind::TimedOut => return Err(ClassifierError::Timeout),
                Err(e) => last = Some(e),
            }
        }
        Err(ClassifierError::Connect(last.unwrap_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::NotFound, "endpoint resolved to no address")
        })))
    }

    /// Sends one clip and waits for its probabilities.
    pub fn classify(&mut self, clip: &Clip) -> Result<ClassifierOutput, ClassifierError> {
        let start = Instant::now();
        let deadline = start + self.timeout;
        let request = match self.side {
            Some(side) if side != clip.side() => ClipRequest::from_clip(&clip.resized(side))?,
            _ => ClipRequest::from_clip(clip)?,
        };
        let result = self.round_trip(&request, deadline);
        if result.is_err() {
            if let Some(conn) = self.conn.take() {
                conn.shutdown(Shutdown::Both).ok();
            }
        }
        let response = result?;
        let probabilities = response.validated()?;
        let mut out = ClassifierOutput::from_probabilities(probabilities, start.elapsed().as_secs_f64() * 1e3);
        out.low_confidence = response.flags & FLAG_LOW_CONFIDENCE != 0;
        Ok(out)
    }

    fn round_trip(&mut self, request: &ClipRequest, deadline: Instant) -> Result<ClipResponse, ClassifierError> {
        if self.conn.is_none() {
            self.conn = Some(self.connect(deadline)?);
        }
        let conn = self.conn.as_mut().expect("connected above");
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(ClassifierError::Timeout);
        }
        conn.set_write_timeout(Some(left)).map_err(ClassifierError::Io)?;
        request.write_to(conn).map_err(ClassifierError::from_io)?;
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(ClassifierError::Timeout);
        }
        conn.set_read_timeout(Some(left)).map_err(ClassifierError::Io)?;
        ClipResponse::read_from(conn)
    }
}

type Handler = dyn Fn(&ClipRequest) -> Vec<u8> + Send + Sync;

/// Loopback worker that answers each request with bytes chosen by a
/// handler. Used to exercise the client without a real model.
pub struct EchoWorker {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    served: Arc<AtomicU64>,
    thread: Option<JoinHandle<()>>,
}

impl EchoWorker {
    /// Worker that always answers with `probabilities`.
    pub fn fixed(probabilities: [f32; 4]) -> std::io::Result<Self> {
        let reply = ClipResponse { probabilities, flags: 0 }.encode().to_vec();
        Self::spawn(move |_| reply.clone())
    }

    pub fn spawn<F>(handler: F) -> std::io::Result<Self>
    where
        F: Fn(&ClipRequest) -> Vec<u8> + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let served = Arc::new(AtomicU64::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let stop = stop.clone();
            let served = served.clone();
            std::thread::Builder::new()
                .name("echo-worker".into())
                .spawn(move || {
                    for conn in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let Ok(conn) = conn else { continue };
                        let handler = handler.clone();
                        let served = served.clone();
                        std::thread::spawn(move || serve(conn, handler.as_ref(), &served));
                    }
                })?
        };
        Ok(EchoWorker {
            addr,
            stop,
            served,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    /// Requests answered so far.
    pub fn served(&self) -> u64 {
        self.served.load(Ordering::SeqCst)
    }
}

fn serve(mut conn: TcpStream, handler: &Handler, served: &AtomicU64) {
    conn.set_nodelay(true).ok();
    while let Ok(Some(req)) = ClipRequest::read_from(&mut conn) {
        let reply = handler(&req);
        if reply.is_empty() || conn.write_all(&reply).is_err() {
            break;
        }
        served.fetch_add(1, Ordering::SeqCst);
    }
}

impl Drop for EchoWorker {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
