//! HTTP session service driven by the annotation UI.
//!
//! A session owns one image and the gaze trace posted so far. Each gaze
//! batch is folded into an incremental gaze map; once no batch has arrived
//! for the debounce interval, a processing pass reruns everything after the
//! gaze map and publishes a new result version. Passes within a session are
//! serialized and readers only ever see complete versions.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use glanceseg::dkf::{DkfRecord, MERGE_IOU};
use glanceseg::pipeline::overlay;
use glanceseg::{io, CandidateMask, Frame, GazeAccumulator, GazeSample, GazeTrace, Pipeline, RunOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::{mask_records, MaskRecord};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 64 << 20;

#[derive(Clone, Debug, Default)]
pub struct ServiceOptions {
    /// Directory where sessions are journaled and restored from.
    pub journal: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Processing,
    Ready,
}

/// One published processing pass.
#[derive(Debug)]
pub struct SessionResult {
    pub version: u64,
    /// Number of posted samples the pass saw; always a prefix of the trace.
    pub trace_len: usize,
    pub masks: Vec<CandidateMask>,
    pub records: Vec<MaskRecord>,
    pub report: Vec<DkfRecord>,
    pub overlay_png_base64: String,
}

struct Inner {
    acc: GazeAccumulator,
    samples: Vec<GazeSample>,
    /// Gaze batches received.
    batches: u64,
    /// Gaze batches covered by the latest finished pass.
    processed: u64,
    running: bool,
    result: Option<Arc<SessionResult>>,
    last_error: Option<String>,
    verdicts: BTreeMap<usize, Verdict>,
}

pub struct Session {
    pub id: String,
    frame: Arc<Frame>,
    inner: Mutex<Inner>,
    pass: tokio::sync::Mutex<()>,
}

impl Session {
    fn status(inner: &Inner) -> Status {
        if inner.running || inner.batches != inner.processed {
            Status::Processing
        } else if inner.result.is_some() {
            Status::Ready
        } else {
            Status::Idle
        }
    }
}

pub struct AppState {
    pipeline: Arc<Pipeline>,
    debounce: Duration,
    journal: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(pipeline: Arc<Pipeline>, opts: ServiceOptions) -> SharedState {
        let debounce = Duration::from_millis(pipeline.config.debounce_ms);
        Arc::new(Self {
            pipeline,
            debounce,
            journal: opts.journal,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session `{id}`")))
    }

    fn insert(&self, id: String, frame: Frame) -> anyhow::Result<Arc<Session>> {
        let acc = GazeAccumulator::new(frame.dims(), self.pipeline.config.sigma_px)?;
        let session = Arc::new(Session {
            id: id.clone(),
            frame: Arc::new(frame),
            inner: Mutex::new(Inner {
                acc,
                samples: Vec::new(),
                batches: 0,
                processed: 0,
                running: false,
                result: None,
                last_error: None,
                verdicts: BTreeMap::new(),
            }),
            pass: tokio::sync::Mutex::new(()),
        });
        self.sessions.lock().unwrap().insert(id, session.clone());
        Ok(session)
    }

    fn journal_dir(&self, id: &str) -> Option<PathBuf> {
        self.journal.as_ref().map(|d| d.join(id))
    }

    /// Reloads every journaled session and schedules a pass for those with
    /// gaze. Returns the number restored.
    pub fn restore(self: &Arc<Self>) -> anyhow::Result<usize> {
        let Some(root) = self.journal.clone() else {
            return Ok(0);
        };
        std::fs::create_dir_all(&root)?;
        let mut restored = 0;
        for entry in std::fs::read_dir(&root)? {
            let dir = entry?.path();
            let Some(id) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                continue;
            };
            let image = dir.join("image.png");
            if !image.exists() {
                continue;
            }
            let session = self.insert(id.clone(), io::read_frame(&image)?)?;
            let trace_path = dir.join("trace.csv");
            if trace_path.exists() {
                let trace = GazeTrace::read_csv(&trace_path)?;
                let mut inner = session.inner.lock().unwrap();
                inner.acc.extend(&trace.samples);
                inner.samples = trace.samples;
                if !inner.samples.is_empty() {
                    inner.batches = 1;
                }
            }
            let verdicts = dir.join("verdicts.json");
            if verdicts.exists() {
                let text = std::fs::read_to_string(&verdicts)?;
                session.inner.lock().unwrap().verdicts = serde_json::from_str(&text)?;
            }
            if session.inner.lock().unwrap().batches > 0 {
                let state = self.clone();
                tokio::spawn(async move { process(state, session).await });
            }
            restored += 1;
            log::info!("restored session {id}");
        }
        Ok(restored)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))
    }
}

impl From<glanceseg::Error> for ApiError {
    fn from(e: glanceseg::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", get(session_info).delete(delete_session))
        .route("/session/{id}/gaze", post(post_gaze))
        .route("/session/{id}/result", get(get_result))
        .route("/session/{id}/mask/{k}/verdict", post(post_verdict))
        .route("/session/{id}/finalize", post(finalize))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Binds `addr`, restores journaled sessions and serves until ctrl-c.
pub async fn serve(addr: &str, state: SharedState) -> anyhow::Result<()> {
    let restored = state.restore()?;
    if restored > 0 {
        log::info!("restored {restored} sessions");
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn create_session(State(state): State<SharedState>, mut form: Multipart) -> Result<Json<serde_json::Value>, ApiError> {
    let mut image = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
    {
        if field.name() == Some("image") {
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
            image = Some(bytes);
        }
    }
    let bytes = image.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "multipart field `image` is missing"))?;
    let frame = io::decode_png_frame(&bytes)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("image: {e}")))?;
    let id = format!("{:032x}", rand::random::<u128>());
    let dims = frame.dims();
    if let Some(dir) = state.journal_dir(&id) {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("image.png"), &bytes)?;
    }
    state.insert(id.clone(), frame)?;
    log::info!("session {id}: {}x{} image", dims.0, dims.1);
    Ok(Json(json!({ "id": id, "width": dims.0, "height": dims.1 })))
}

async fn session_info(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = state.session(&id)?;
    let inner = session.inner.lock().unwrap();
    Ok(Json(json!({
        "id": session.id,
        "width": session.frame.width(),
        "height": session.frame.height(),
        "status": Session::status(&inner),
        "version": inner.result.as_ref().map_or(0, |r| r.version),
        "samples": inner.samples.len(),
        "error": inner.last_error,
    })))
}

#[derive(Debug, Deserialize)]
pub struct GazeBatch {
    pub samples: Vec<GazeSample>,
}

async fn post_gaze(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    Json(batch): Json<GazeBatch>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = state.session(&id)?;
    let (w, h) = session.frame.dims();
    // the whole batch is rejected if any sample is off the image
    for (k, s) in batch.samples.iter().enumerate() {
        let inside = s.x >= 0.0 && s.y >= 0.0 && s.x < w as f64 && s.y < h as f64;
        if s.valid && !inside {
            return Err(ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({
                    "error": format!("sample {k} at ({}, {}) lies outside the {w}x{h} image", s.x, s.y),
                    "index": k,
                }),
            });
        }
    }
    let (accepted, version, seq) = {
        let mut inner = session.inner.lock().unwrap();
        let accepted = batch.samples.iter().filter(|s| s.valid).count();
        inner.acc.extend(&batch.samples);
        inner.samples.extend_from_slice(&batch.samples);
        inner.batches += 1;
        if let Some(dir) = state.journal_dir(&id) {
            let trace = GazeTrace::new(id.clone(), inner.samples.clone());
            trace.write_csv(&dir.join("trace.csv"))?;
        }
        (accepted, inner.result.as_ref().map_or(0, |r| r.version), inner.batches)
    };
    let debounce = state.debounce;
    tokio::spawn(async move {
        tokio::time::sleep(debounce).await;
        if session.inner.lock().unwrap().batches == seq {
            process(state, session).await;
        }
    });
    Ok(Json(json!({ "accepted_count": accepted, "version": version })))
}

/// Runs one pass over everything posted so far, unless an earlier pass
/// already covered it.
async fn process(state: SharedState, session: Arc<Session>) {
    let _serial = session.pass.lock().await;
    let (map, trace_len, seq) = {
        let mut inner = session.inner.lock().unwrap();
        if inner.processed == inner.batches {
            return;
        }
        inner.running = true;
        (inner.acc.snapshot(), inner.samples.len(), inner.batches)
    };
    let pipeline = state.pipeline.clone();
    let frame = session.frame.clone();
    let outcome = tokio::task::spawn_blocking(move || -> anyhow::Result<(Vec<CandidateMask>, Vec<DkfRecord>, String)> {
        if map.points.is_empty() {
            anyhow::bail!("no valid gaze samples yet");
        }
        let result = pipeline.run_with_gaze_map(&frame, &map, &RunOptions::default())?;
        let png = io::encode_png_frame(&overlay(&frame, &result))?;
        Ok((result.masks, result.report, B64.encode(png)))
    })
    .await
    .map_err(anyhow::Error::from)
    .and_then(|r| r);

    let mut inner = session.inner.lock().unwrap();
    inner.running = false;
    inner.processed = seq;
    match outcome {
        Ok((masks, report, overlay_png_base64)) => {
            let version = inner.result.as_ref().map_or(0, |r| r.version) + 1;
            let verdicts = carry_verdicts(inner.result.as_deref(), &inner.verdicts, &masks);
            inner.verdicts = verdicts;
            inner.last_error = None;
            inner.result = Some(Arc::new(SessionResult {
                version,
                trace_len,
                records: mask_records(&masks),
                masks,
                report,
                overlay_png_base64,
            }));
            log::debug!("session {}: version {version} over {trace_len} samples", session.id);
        }
        Err(e) => {
            log::warn!("session {}: pass failed: {e:#}", session.id);
            inner.last_error = Some(format!("{e:#}"));
        }
    }
}

/// Maps each verdict onto the new mask that overlaps its old mask best,
/// provided the overlap clears the merge threshold.
fn carry_verdicts(
    old: Option<&SessionResult>,
    verdicts: &BTreeMap<usize, Verdict>,
    masks: &[CandidateMask],
) -> BTreeMap<usize, Verdict> {
    let Some(old) = old else {
        return BTreeMap::new();
    };
    let mut out = BTreeMap::new();
    for (&k, &v) in verdicts {
        let Some(prev) = old.masks.get(k) else { continue };
        let best = masks
            .iter()
            .enumerate()
            .map(|(j, m)| (j, m.iou(prev)))
            .filter(|&(_, iou)| iou > MERGE_IOU)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, _)) = best {
            out.insert(j, v);
        }
    }
    out
}

#[derive(Debug, Deserialize)]
pub struct Since {
    pub since: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResultMask<'a> {
    #[serde(flatten)]
    record: &'a MaskRecord,
    verdict: Option<Verdict>,
}

async fn get_result(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<Since>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let (result, status, verdicts) = {
        let inner = session.inner.lock().unwrap();
        (inner.result.clone(), Session::status(&inner), inner.verdicts.clone())
    };
    let Some(result) = result.filter(|r| q.since.is_none_or(|v| r.version > v)) else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    let masks: Vec<ResultMask> = result
        .records
        .iter()
        .map(|r| ResultMask {
            record: r,
            verdict: verdicts.get(&r.index).copied(),
        })
        .collect();
    Ok(Json(json!({
        "version": result.version,
        "status": status,
        "trace_len": result.trace_len,
        "masks": masks,
        "dkf_report": result.report,
        "overlay_png_base64": result.overlay_png_base64,
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
pub struct VerdictBody {
    pub verdict: Verdict,
}

async fn post_verdict(
    State(state): State<SharedState>,
    UrlPath((id, k)): UrlPath<(String, usize)>,
    Json(body): Json<VerdictBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = state.session(&id)?;
    let mut inner = session.inner.lock().unwrap();
    let count = inner.result.as_ref().map_or(0, |r| r.masks.len());
    if k >= count {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("mask {k} does not exist ({count} masks)"),
        ));
    }
    inner.verdicts.insert(k, body.verdict);
    if let Some(dir) = state.journal_dir(&id) {
        std::fs::write(dir.join("verdicts.json"), serde_json::to_string(&inner.verdicts).unwrap())?;
    }
    let version = inner.result.as_ref().map_or(0, |r| r.version);
    Ok(Json(json!({ "index": k, "verdict": body.verdict, "version": version })))
}

/// Final annotation: the union of every mask not rejected.
async fn finalize(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = state.session(&id)?;
    let inner = session.inner.lock().unwrap();
    if Session::status(&inner) == Status::Processing {
        return Err(ApiError::new(StatusCode::CONFLICT, "session is still processing"));
    }
    let (w, h) = session.frame.dims();
    let mut mask = glanceseg::Mask::new(w, h);
    let mut masks = Vec::new();
    let version = inner.result.as_ref().map_or(0, |r| r.version);
    let trace_len = inner.result.as_ref().map_or(0, |r| r.trace_len);
    if let Some(result) = &inner.result {
        for (k, m) in result.masks.iter().enumerate() {
            let verdict = inner.verdicts.get(&k).copied();
            let included = verdict != Some(Verdict::Reject);
            if included {
                for p in m.pixels() {
                    mask.set(p.x, p.y, true);
                }
            }
            masks.push(json!({
                "index": k,
                "bbox": result.records[k].bbox,
                "score": m.confidence,
                "verdict": verdict,
                "included": included,
            }));
        }
    }
    let png = io::encode_png_mask(&mask)?;
    Ok(Json(json!({
        "mask_png_base64": B64.encode(png),
        "annotation": {
            "session": id,
            "width": w,
            "height": h,
            "version": version,
            "trace_len": trace_len,
            "samples": inner.samples.len(),
            "masks": masks,
        },
    })))
}

async fn delete_session(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
) -> Result<StatusCode, ApiError> {
    let removed = state.sessions.lock().unwrap().remove(&id);
    if removed.is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no session `{id}`")));
    }
    if let Some(dir) = state.journal_dir(&id) {
        remove_dir_if_exists(&dir)?;
    }
    Ok(StatusCode::NO_CONTENT)
}

fn remove_dir_if_exists(dir: &Path) -> std::io::Result<()> {
    match std::fs::remove_dir_all(dir) {
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        other => other,
    }
}
