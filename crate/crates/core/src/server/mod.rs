//! HTTP session service over a [`Store`]. Mutations go through one store
//! lock, so the log stays a total order.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::eval::event_counts;
use crate::mask::{encode_bin, encode_color_png, encode_indexed_png, encode_rgb_png, Face, InterventionType, RegionSelection};
use crate::propagation::PropagationError;
use crate::region::{Connectivity, RegionError, WandParams};
use crate::store::{overlay, Store, StoreError};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error("bad store: {0}")]
    BadStore(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Error body `{code, message}` with its status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        let (status, code) = match &e {
            StoreError::NotFound(_) => (S::NOT_FOUND, "NotFound"),
            StoreError::AlreadyDecided(_) => (S::CONFLICT, "AlreadyDecided"),
            StoreError::Conflict(_) => (S::CONFLICT, "Conflict"),
            StoreError::Propagation(PropagationError::NotHumanProvenance(_)) => (S::CONFLICT, "NotHumanProvenance"),
            StoreError::Region(r) => (
                S::UNPROCESSABLE_ENTITY,
                match r {
                    RegionError::SeedOutOfBounds { .. } => "SeedOutOfBounds",
                    RegionError::EmptySelection => "EmptySelection",
                    RegionError::ClassOutOfRange(_) => "ClassOutOfRange",
                    RegionError::DimensionMismatch(_) => "DimensionMismatch",
                    RegionError::InvalidParams(_) => "InvalidParams",
                    RegionError::DigestMismatch => "DigestMismatch",
                },
            ),
            StoreError::Invalid(_) => (S::UNPROCESSABLE_ENTITY, "Invalid"),
            _ => (S::INTERNAL_SERVER_ERROR, "Internal"),
        };
        ApiError::new(status, code, message)
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "BadRequest", e.to_string()))
}

fn face_of(s: &str) -> ApiResult<Face> {
    s.parse().map_err(|m: String| ApiError::new(StatusCode::NOT_FOUND, "NotFound", m))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

#[derive(Clone, Debug, Serialize)]
struct Session {
    session_id: String,
    site_id: String,
    face: Face,
    /// Record ids this session created, oldest first.
    undo: Vec<String>,
}

pub struct AppState {
    store: Mutex<Store>,
    sessions: Mutex<HashMap<String, Session>>,
}

type Shared = Arc<AppState>;

pub fn router(store: Store) -> Router {
    let state = Arc::new(AppState { store: Mutex::new(store), sessions: Mutex::new(HashMap::new()) });
    Router::new()
        .route("/api/sites", get(sites))
        .route("/api/sites/{site}/faces/{face}/{kind}", get(face_asset))
        .route("/api/sessions", post(open_session))
        .route("/api/sessions/{id}/wand", post(wand))
        .route("/api/sessions/{id}/corrections", post(correction))
        .route("/api/sessions/{id}/undo", post(undo))
        .route("/api/propagate/{record}", post(run_propagation))
        .route("/api/review-queue", get(review_queue))
        .route("/api/review/{item}", post(review))
        .route("/api/train", post(train))
        .route("/api/metrics", get(metrics))
        .route("/api/stats/effort", get(effort))
        .with_state(state)
}

pub async fn serve(store: Store, addr: SocketAddr) -> Result<(), ServerError> {
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => return Err(ServerError::PortInUse(addr)),
        Err(e) => return Err(e.into()),
    };
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}

async fn sites(State(st): State<Shared>) -> Json<Value> {
    let store = st.store.lock();
    let list: Vec<Value> = store
        .sites()
        .iter()
        .map(|s| json!({ "site_id": s.site_id, "split": s.split, "faces": s.faces.keys().collect::<Vec<_>>() }))
        .collect();
    Json(Value::Array(list))
}

#[derive(Deserialize)]
struct AssetQuery {
    alpha: Option<f64>,
    format: Option<String>,
}

async fn face_asset(
    State(st): State<Shared>,
    Path((site, face, kind)): Path<(String, String, String)>,
    Query(q): Query<AssetQuery>,
) -> ApiResult<Response> {
    let face = face_of(&face)?;
    let store = st.store.lock();
    let missing = |what: &str| ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no {what} for {site}/{face}"));
    match kind.as_str() {
        "image" => Ok(png(store.image_bytes(&site, face)?)),
        "prediction" => {
            store.image(&site, face)?;
            let p = store.prediction(&site, face)?.ok_or_else(|| missing("prediction"))?;
            Ok(png(encode_color_png(&p)))
        }
        "overlay" => {
            let image = store.image(&site, face)?;
            let m = store.current_mask(&site, face)?.ok_or_else(|| missing("mask"))?;
            let out = overlay(&image, &m, q.alpha.unwrap_or(store.config.overlay_alpha))?;
            Ok(png(encode_rgb_png(&out)))
        }
        "mask" => {
            store.image(&site, face)?;
            let m = store.current_mask(&site, face)?.ok_or_else(|| missing("mask"))?;
            Ok(match q.format.as_deref() {
                Some("bin") => ([(header::CONTENT_TYPE, "application/octet-stream")], encode_bin(&m)).into_response(),
                Some("vis") => png(encode_color_png(&m)),
                _ => png(encode_indexed_png(&m)),
            })
        }
        "failures" => Ok(Json(store.failures(&site, face)?).into_response()),
        other => Err(ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("unknown asset {other}"))),
    }
}

#[derive(Deserialize)]
struct OpenBody {
    site_id: String,
    face: Face,
}

async fn open_session(State(st): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: OpenBody = parse(&body)?;
    let mut store = st.store.lock();
    store.image(&b.site_id, b.face)?;
    let id = store.open_session()?;
    let version = store.state().version_count(&(b.site_id.clone(), b.face)).saturating_sub(1);
    let session = Session { session_id: id.clone(), site_id: b.site_id, face: b.face, undo: vec![] };
    let out = json!({ "session_id": id, "site_id": session.site_id, "face": session.face, "version": version });
    st.sessions.lock().insert(id, session);
    Ok(Json(out))
}

fn session(st: &AppState, id: &str) -> ApiResult<Session> {
    st.sessions
        .lock()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("session {id}")))
}

#[derive(Deserialize)]
struct WandBody {
    x: u32,
    y: u32,
    tolerance: Option<f64>,
    connectivity: Option<Connectivity>,
}

async fn wand(State(st): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: WandBody = parse(&body)?;
    let s = session(&st, &id)?;
    let store = st.store.lock();
    let params = WandParams {
        tolerance: b.tolerance.unwrap_or(store.config.wand.tolerance),
        connectivity: b.connectivity.unwrap_or(store.config.wand.connectivity),
    };
    let sel = store.wand(&s.site_id, s.face, (b.x, b.y), params)?;
    Ok(Json(json!({ "count": sel.count(), "selection": sel })))
}

#[derive(Deserialize)]
struct CorrectionBody {
    selection: Value,
    class: u8,
    intervention_type: InterventionType,
    #[serde(default)]
    interactions: Option<u32>,
    #[serde(default)]
    elapsed_s: Option<f64>,
}

async fn correction(State(st): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: CorrectionBody = parse(&body)?;
    let sel: RegionSelection = serde_json::from_value(b.selection)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidSelection", e.to_string()))?;
    let s = session(&st, &id)?;
    let mut store = st.store.lock();
    let record = store.submit_correction(
        &s.site_id,
        s.face,
        &sel,
        b.class,
        b.intervention_type,
        b.interactions.unwrap_or(1),
        b.elapsed_s.unwrap_or(0.0),
    )?;
    let version = store.state().version_count(&record.image_key()) - 1;
    if let Some(sess) = st.sessions.lock().get_mut(&id) {
        sess.undo.push(record.record_id.clone());
    }
    Ok(Json(json!({ "record": record, "version": version })))
}

async fn undo(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = session(&st, &id)?;
    let mut store = st.store.lock();
    let target = s
        .undo
        .iter()
        .rev()
        .find(|r| store.state().records.contains_key(*r))
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "NothingToUndo", "no live correction in this session"))?;
    store.undo(&target)?;
    let version = store.state().version_count(&(s.site_id.clone(), s.face)) - 1;
    if let Some(sess) = st.sessions.lock().get_mut(&id) {
        sess.undo.retain(|r| r != &target);
    }
    Ok(Json(json!({ "undone": target, "version": version })))
}

async fn run_propagation(State(st): State<Shared>, Path(record): Path<String>) -> ApiResult<Json<Value>> {
    let mut store = st.store.lock();
    Ok(Json(serde_json::to_value(store.propagate(&record)?).expect("summary serializes")))
}

async fn review_queue(State(st): State<Shared>) -> Json<Value> {
    let store = st.store.lock();
    let items: Vec<Value> = store
        .review_queue()
        .into_iter()
        .map(|e| {
            let r = &e.item.record;
            json!({
                "item_id": r.record_id,
                "site_id": r.site_id,
                "face": r.face,
                "class": r.corrected_class,
                "selection": r.region,
                "provenance": r.provenance,
                "match": e.item.matched,
            })
        })
        .collect();
    Json(Value::Array(items))
}

#[derive(Deserialize)]
struct ReviewBody {
    accept: bool,
}

async fn review(State(st): State<Shared>, Path(item): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: ReviewBody = parse(&body)?;
    let mut store = st.store.lock();
    let record = store.review(&item, b.accept)?;
    Ok(Json(json!({ "item_id": item, "accepted": b.accept, "record": record })))
}

#[derive(Deserialize)]
struct TrainBody {
    epochs: Option<usize>,
}

async fn train(State(st): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: TrainBody = parse(&body)?;
    let store = st.store.lock();
    Ok(Json(serde_json::to_value(store.train(b.epochs)?).expect("report serializes")))
}

async fn metrics(State(st): State<Shared>) -> ApiResult<Json<Value>> {
    let store = st.store.lock();
    let rows = match store.metrics() {
        Ok(r) => serde_json::to_value(r).expect("rows serialize"),
        Err(StoreError::NotFound(_)) => Value::Array(vec![]),
        Err(e) => return Err(e.into()),
    };
    Ok(Json(json!({ "rows": rows, "events": event_counts(store.log()) })))
}

async fn effort(State(st): State<Shared>) -> ApiResult<Json<Value>> {
    let store = st.store.lock();
    let live = store.state().live_records().count();
    let human = store.state().live_records().filter(|r| r.provenance.is_human()).count();
    let stats = store.effort()?;
    Ok(Json(json!({
        "mean_seconds_per_image": stats.map_or(0.0, |s| s.mean_seconds_per_image),
        "mean_interactions_per_image": stats.map_or(0.0, |s| s.mean_interactions_per_image),
        "images": stats.map_or(0, |s| s.images),
        "human_records": human,
        "live_records": live,
    })))
}
