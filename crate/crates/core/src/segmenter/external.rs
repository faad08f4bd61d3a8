use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::io::BufReader;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::protocol::{
    parse_message, png_base64, read_frame, write_message, Envelope, Request, Response, WireMask,
    WirePoint,
};
use super::{rle, CandidateMask, Capabilities, SegmenterBackend};
use crate::error::{Error, Result};
use crate::raster::{BBox, Frame, PixelPoint};

/// Carries one request to an adapter and returns its response.
pub trait Transport: Send + Sync {
    fn call(&self, request: Request) -> Result<Response>;
}

type Pending = Arc<Mutex<HashMap<u64, Sender<Result<Response>>>>>;

/// Adapter running as a child process, spoken to over framed stdio.
/// Requests may be issued from several threads; responses are routed back by
/// id.
pub struct StdioTransport {
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    pending: Pending,
    next_id: AtomicU64,
    timeout: Duration,
    reader: Option<JoinHandle<()>>,
}

impl StdioTransport {
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start adapter `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let pending: Pending = Arc::default();
        let routes = Arc::clone(&pending);
        let reader = std::thread::spawn(move || {
            let mut stdout = BufReader::new(stdout);
            let failure = loop {
                match read_frame(&mut stdout) {
                    Ok(Some(bytes)) => match parse_message::<Response>(&bytes) {
                        Ok(env) => {
                            if let Some(tx) = routes.lock().unwrap().remove(&env.id) {
                                let _ = tx.send(Ok(env.body));
                            } else {
                                log::warn!("adapter answered unknown request id {}", env.id);
                            }
                        }
                        Err(e) => break e.to_string(),
                    },
                    Ok(None) => break "adapter closed its output".to_string(),
                    Err(e) => break e.to_string(),
                }
            };
            for (_, tx) in routes.lock().unwrap().drain() {
                let _ = tx.send(Err(Error::Backend(failure.clone())));
            }
        });
        Ok(Self {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            pending,
            next_id: AtomicU64::new(1),
            timeout,
            reader: Some(reader),
        })
    }
}

impl Transport for StdioTransport {
    fn call(&self, request: Request) -> Result<Response> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        self.pending.lock().unwrap().insert(id, tx);
        let sent = write_message(&mut *self.stdin.lock().unwrap(), &Envelope { id, body: request });
        if let Err(e) = sent {
            self.pending.lock().unwrap().remove(&id);
            return Err(Error::Backend(format!("adapter unreachable: {e}")));
        }
        match rx.recv_timeout(self.timeout) {
            Ok(result) => result,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().remove(&id);
                Err(Error::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Backend("adapter connection lost".into()))
            }
        }
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let mut child = self.child.lock().unwrap();
        let _ = child.kill();
        let _ = child.wait();
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
    }
}

/// Adapter listening on HTTP: each request is POSTed as JSON to `url`.
pub struct HttpTransport {
    url: String,
    client: reqwest::blocking::Client,
    next_id: AtomicU64,
}

impl HttpTransport {
    pub fn new(url: &str, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(Self {
            url: url.to_string(),
            client,
            next_id: AtomicU64::new(1),
        })
    }
}

impl Transport for HttpTransport {
    fn call(&self, request: Request) -> Result<Response> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = serde_json::to_vec(&Envelope { id, body: request })
            .map_err(|e| Error::Protocol(e.to_string()))?;
        let response = self
            .client
            .post(&self.url)
            .header("content-type", "application/json")
            .body(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Error::Backend(format!("adapter timed out: {e}"))
                } else {
                    Error::Backend(format!("adapter unreachable: {e}"))
                }
            })?;
        let bytes = response
            .bytes()
            .map_err(|e| Error::Backend(format!("adapter response: {e}")))?;
        let env: Envelope<Response> = parse_message(&bytes)?;
        if env.id != id {
            return Err(Error::Protocol(format!("response id {} for request {id}", env.id)));
        }
        Ok(env.body)
    }
}

/// Segmenter backed by an adapter process or server.
pub struct ExternalBackend {
    transport: Box<dyn Transport>,
    capabilities: Capabilities,
    uploaded: Mutex<HashSet<String>>,
}

impl ExternalBackend {
    /// Performs the `hello` handshake over `transport`.
    pub fn new(transport: Box<dyn Transport>) -> Result<Self> {
        let capabilities = match transport.call(Request::Hello)? {
            Response::Hello {
                name,
                version,
                max_prompts,
            } => Capabilities {
                name,
                version,
                max_prompts: max_prompts.max(1),
            },
            other => return Err(unexpected(other)),
        };
        Ok(Self {
            transport,
            capabilities,
            uploaded: Mutex::default(),
        })
    }

    /// `endpoint` is either `http://...`/`https://...` or
    /// `stdio:<program> [args...]`.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self> {
        let transport: Box<dyn Transport> = if let Some(cmd) = endpoint.strip_prefix("stdio:") {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts
                .next()
                .ok_or_else(|| Error::invalid("endpoint", "stdio endpoint names no program"))?;
            let args: Vec<String> = parts.collect();
            Box::new(StdioTransport::spawn(&program, &args, timeout)?)
        } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Box::new(HttpTransport::new(endpoint, timeout)?)
        } else {
            return Err(Error::invalid(
                "endpoint",
                format!("`{endpoint}` is neither stdio:<cmd> nor an http(s) URL"),
            ));
        };
        Self::new(transport)
    }

    fn ensure_uploaded(&self, image: &Frame) -> Result<String> {
        let mut hasher = DefaultHasher::new();
        image.dims().hash(&mut hasher);
        image.as_raw().hash(&mut hasher);
        let image_id = format!("{:016x}", hasher.finish());
        if self.uploaded.lock().unwrap().contains(&image_id) {
            return Ok(image_id);
        }
        match self.transport.call(Request::SetImage {
            image_id: image_id.clone(),
            png_base64: png_base64(image)?,
        })? {
            Response::ImageSet { .. } => {
                self.uploaded.lock().unwrap().insert(image_id.clone());
                Ok(image_id)
            }
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(response: Response) -> Error {
    match response {
        Response::Error { code, message } => Error::Backend(format!("adapter error {code}: {message}")),
        other => Error::Protocol(format!("unexpected response {other:?}")),
    }
}

fn decode_wire_mask(
    wire: &WireMask,
    dims: (u32, u32),
    prompts: &[PixelPoint],
) -> Result<Option<CandidateMask>> {
    let [h, w] = wire.size;
    if (w, h) != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: (w, h),
        });
    }
    let mask = rle::decode(&wire.rle_counts, w, h)?;
    if !wire.score.is_finite() {
        return Err(Error::Protocol("non-finite mask score".into()));
    }
    let Some(bbox) = mask.bbox() else {
        return Ok(None);
    };
    let [bx, by, bw, bh] = wire.bbox;
    if (BBox { x: bx, y: by, w: bw, h: bh }) != bbox {
        log::debug!("adapter bbox {:?} differs from mask extent {bbox:?}", wire.bbox);
    }
    let source = match wire.prompt_index {
        Some(i) => *prompts
            .get(i)
            .ok_or_else(|| Error::Protocol(format!("prompt_index {i} out of range")))?,
        None => prompts
            .iter()
            .copied()
            .find(|p| mask.get(p.x, p.y))
            .unwrap_or_else(|| mask.points().next().expect("non-empty")),
    };
    Ok(CandidateMask::from_mask(&mask, wire.score, source))
}

impl SegmenterBackend for ExternalBackend {
    fn capabilities(&self) -> Capabilities {
        self.capabilities.clone()
    }

    fn segment_prompts(&self, image: &Frame, prompts: &[PixelPoint]) -> Result<Vec<CandidateMask>> {
        let image_id = self.ensure_uploaded(image)?;
        let points = prompts.iter().map(|p| WirePoint { x: p.x, y: p.y }).collect();
        match self.transport.call(Request::Segment { image_id, points })? {
            Response::Masks { masks } => {
                let mut out = Vec::with_capacity(masks.len());
                for wire in &masks {
                    if let Some(m) = decode_wire_mask(wire, image.dims(), prompts)? {
                        out.push(m);
                    }
                }
                Ok(out)
            }
            other => Err(unexpected(other)),
        }
    }
}
