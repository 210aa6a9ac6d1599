//! HTTP session service for the interactive annotate/deform loop.
//!
//! A session holds one volume, the annotator's points and the latest
//! deformed mesh and raster. Every mutating request bumps the session
//! revision; the mesh and raster remember the revision they were computed
//! at, so a client can tell when an overlay no longer matches the points.
//! Coordinates on the wire are physical millimetres, ordered `[z, y, x]`.

mod bundle;
mod slice;

pub use bundle::{export_bundle, read_bundle, Bundle, Manifest};
pub use slice::{contour_rle, normalize_u8, rle_decode, SlicePayload};

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::asm::{DeformParams, DeformReport};
use crate::error::Error;
use crate::grid::{iou, rvol, BinaryGrid, GridSpec, VoxelGrid};
use crate::mesh::{obj, TriMesh};
use crate::pipeline::{fit_points, DEFAULT_SUBDIVISIONS};
use crate::Point3;

const MAX_UPLOAD: usize = 1 << 30;

/// Error body `{"error": code, "detail": message}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        ApiError { status, code, detail: detail.into() }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}"))
    }

    fn bad_request(code: &'static str, detail: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, detail)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::Shape(_) | Error::Parameter(_) | Error::Format(_) | Error::Json(_) => {
                (StatusCode::BAD_REQUEST, "invalid_input")
            }
            Error::Empty(_) => (StatusCode::CONFLICT, "empty_input"),
            Error::Validity(_) | Error::Numeric(_) => (StatusCode::UNPROCESSABLE_ENTITY, "computation_failed"),
            Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io_error"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "detail": self.detail }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Directory receiving one bundle per session after each mutation.
    pub snapshot_dir: Option<PathBuf>,
    /// Directory served at `/` (the browser client build).
    pub static_dir: Option<PathBuf>,
    pub subdivisions: u32,
    pub deform: DeformParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { snapshot_dir: None, static_dir: None, subdivisions: DEFAULT_SUBDIVISIONS, deform: DeformParams::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEntry {
    pub id: u64,
    pub point: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Computed<T> {
    pub value: T,
    pub revision: u64,
}

pub struct Session {
    pub id: String,
    pub volume: VoxelGrid<f32>,
    pub points: Vec<PointEntry>,
    next_point_id: u64,
    /// Rest shape of the most recent deformation.
    pub template: Option<TriMesh>,
    pub deformed: Option<Computed<TriMesh>>,
    pub raster: Option<Computed<BinaryGrid>>,
    pub report: Option<Computed<DeformReport>>,
    pub truth: Option<BinaryGrid>,
    pub revision: u64,
    intensity_range: (f32, f32),
}

impl Session {
    pub fn new(id: String, volume: VoxelGrid<f32>) -> Self {
        let range = volume
            .data()
            .iter()
            .filter(|v| v.is_finite())
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Session {
            id,
            volume,
            points: Vec::new(),
            next_point_id: 0,
            template: None,
            deformed: None,
            raster: None,
            report: None,
            truth: None,
            revision: 0,
            intensity_range: range,
        }
    }

    pub fn point_coords(&self) -> Vec<Point3> {
        self.points.iter().map(|e| Point3::from(e.point)).collect()
    }

    pub fn annotation(&self) -> crate::annosim::AnnotationSet {
        crate::annosim::AnnotationSet::new(
            self.id.clone(),
            crate::annosim::Source::Interactive,
            None,
            self.point_coords(),
        )
        .expect("session points are kept distinct")
    }

    fn raster_is_current(&self) -> bool {
        self.raster.as_ref().is_some_and(|r| r.revision == self.revision)
    }

    fn metadata(&self) -> serde_json::Value {
        let spec = self.volume.spec();
        json!({
            "id": self.id,
            "revision": self.revision,
            "dims": spec.dims,
            "spacing": spec.spacing,
            "origin": spec.origin,
            "intensity_range": [self.intensity_range.0, self.intensity_range.1],
            "points": self.points,
            "deformed_revision": self.deformed.as_ref().map(|d| d.revision),
            "raster_revision": self.raster.as_ref().map(|r| r.revision),
            "stale": !self.raster_is_current(),
            "report": self.report.as_ref().map(|r| &r.value),
            "has_truth": self.truth.is_some(),
        })
    }
}

type SessionRef = Arc<RwLock<Session>>;

pub struct AppState {
    sessions: RwLock<HashMap<String, SessionRef>>,
    config: ServiceConfig,
    /// Highest revision written per session snapshot.
    snapshots: Mutex<HashMap<String, u64>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState { sessions: RwLock::new(HashMap::new()), config, snapshots: Mutex::new(HashMap::new()) })
    }

    fn session(&self, id: &str) -> ApiResult<SessionRef> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    /// Write-behind snapshot of a session bundle; older revisions never overwrite newer ones.
    fn snapshot(self: &Arc<Self>, s: &Session) {
        let Some(dir) = self.config.snapshot_dir.clone() else { return };
        let bytes = match export_bundle(s) {
            Ok(b) => b,
            Err(e) => {
                tracing::warn!(session = %s.id, "snapshot failed: {e}");
                return;
            }
        };
        let (id, rev) = (s.id.clone(), s.revision);
        let state = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let mut written = state.snapshots.lock();
            if written.get(&id).is_some_and(|&r| r > rev) {
                return;
            }
            let path = dir.join(format!("{id}.zip"));
            match std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&path, &bytes)) {
                Ok(()) => {
                    written.insert(id, rev);
                }
                Err(e) => tracing::warn!(path = %path.display(), "snapshot write failed: {e}"),
            }
        });
    }
}

/// Router with every `/v1` route; serves `static_dir` as a fallback when configured.
pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/points", post(add_points))
        .route("/v1/sessions/{id}/points/{pid}", delete(remove_point))
        .route("/v1/sessions/{id}/deform", post(deform_session))
        .route("/v1/sessions/{id}/slice", get(get_slice))
        .route("/v1/sessions/{id}/mesh", get(get_mesh))
        .route("/v1/sessions/{id}/export", get(export))
        .route("/v1/sessions/{id}/truth", post(upload_truth))
        .route("/v1/sessions/{id}/debug/iou", get(debug_iou))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD));
    let api = if state.config.static_dir.is_some() { api.fallback(get(serve_static)) } else { api };
    api.with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let app = router(AppState::new(config));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}

fn decode_volume(body: &[u8]) -> ApiResult<VoxelGrid<f32>> {
    rvol::decode(body).map(|g| g.into_f32()).map_err(|e| ApiError::bad_request("bad_volume", e.to_string()))
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let volume = decode_volume(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(id.clone(), volume);
    let meta = session.metadata();
    st.snapshot(&session);
    st.sessions.write().insert(id, Arc::new(RwLock::new(session)));
    Ok((StatusCode::CREATED, Json(meta)).into_response())
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(st.session(&id)?.read().metadata()))
}

#[derive(Deserialize)]
struct PointsBody {
    points: Vec<[f64; 3]>,
}

async fn add_points(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let body: PointsBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("bad_points", e.to_string()))?;
    let sref = st.session(&id)?;
    let mut s = sref.write();
    let spec = *s.volume.spec();
    let mut seen: Vec<[u64; 3]> = s.points.iter().map(|e| e.point.map(key)).collect();
    for p in &body.points {
        if !p.iter().all(|c| c.is_finite()) || !spec.contains_point(&Point3::from(*p)) {
            return Err(ApiError::bad_request("point_out_of_bounds", format!("point {p:?} lies outside the volume")));
        }
        let k = p.map(key);
        if seen.contains(&k) {
            return Err(ApiError::new(StatusCode::CONFLICT, "duplicate_point", format!("point {p:?} is already annotated")));
        }
        seen.push(k);
    }
    let mut ids = Vec::with_capacity(body.points.len());
    for p in body.points {
        let pid = s.next_point_id;
        s.next_point_id += 1;
        s.points.push(PointEntry { id: pid, point: p });
        ids.push(pid);
    }
    s.revision += 1;
    st.snapshot(&s);
    Ok(Json(json!({ "revision": s.revision, "ids": ids, "count": s.points.len() })))
}

fn key(c: f64) -> u64 {
    if c == 0.0 {
        0
    } else {
        c.to_bits()
    }
}

async fn remove_point(
    State(st): State<Arc<AppState>>,
    Path((id, pid)): Path<(String, u64)>,
) -> ApiResult<Json<serde_json::Value>> {
    let sref = st.session(&id)?;
    let mut s = sref.write();
    match s.points.iter().position(|e| e.id == pid) {
        Some(i) => {
            s.points.remove(i);
            s.revision += 1;
            st.snapshot(&s);
            Ok(Json(json!({ "revision": s.revision, "removed": true })))
        }
        None => {
            tracing::warn!(session = %id, pid, "remove of unknown point ignored");
            Ok(Json(json!({ "revision": s.revision, "removed": false, "warning": format!("no point with id {pid}") })))
        }
    }
}

async fn deform_session(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let params: DeformParams = if body.iter().all(|b| b.is_ascii_whitespace()) {
        st.config.deform
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("bad_params", e.to_string()))?
    };
    params.validate()?;
    let sref = st.session(&id)?;
    let subdivisions = st.config.subdivisions;
    let state = Arc::clone(&st);
    tokio::task::spawn_blocking(move || {
        let mut s = sref.write();
        if s.points.len() < 4 {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "too_few_points",
                format!("deformation needs at least 4 points, the session has {}; add more points", s.points.len()),
            ));
        }
        let points = s.point_coords();
        if s.deformed.is_none() {
            crate::pipeline::check_non_coplanar(&points)
                .map_err(|e| ApiError::new(StatusCode::CONFLICT, "coplanar_points", e.to_string()))?;
        }
        let start = s.deformed.as_ref().map(|d| d.value.clone());
        let fit = fit_points(&points, s.volume.spec(), start.as_ref(), subdivisions, &params)?;
        s.revision += 1;
        let rev = s.revision;
        let voxels = fit.raster.count_foreground();
        s.template = Some(fit.template);
        s.deformed = Some(Computed { value: fit.mesh, revision: rev });
        s.raster = Some(Computed { value: fit.raster, revision: rev });
        s.report = Some(Computed { value: fit.report.clone(), revision: rev });
        state.snapshot(&s);
        Ok(Json(json!({
            "revision": rev,
            "mesh_revision": rev,
            "report": fit.report,
            "raster_voxels": voxels,
        })))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "worker_failed", e.to_string()))?
}

async fn get_slice(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<SlicePayload>> {
    let int = |name: &str| -> ApiResult<usize> {
        let v = q.get(name).ok_or_else(|| ApiError::bad_request("bad_query", format!("missing {name}")))?;
        v.parse().map_err(|_| ApiError::bad_request("bad_query", format!("{name} must be a nonnegative integer, got {v:?}")))
    };
    let axis = int("axis")?;
    let index = int("index")?;
    let overlay = match q.get("overlay").map(String::as_str) {
        None | Some("false") | Some("0") => false,
        Some("true") | Some("1") => true,
        Some(v) => return Err(ApiError::bad_request("bad_query", format!("overlay must be true or false, got {v:?}"))),
    };
    if axis > 2 {
        return Err(ApiError::bad_request("bad_axis", format!("axis must be 0, 1 or 2, got {axis}")));
    }
    let sref = st.session(&id)?;
    let s = sref.read();
    let n = s.volume.dims().axis_len(axis);
    if index >= n {
        return Err(ApiError::bad_request("bad_index", format!("index {index} out of range for axis {axis} (len {n})")));
    }
    Ok(Json(slice::build(&s, axis, index, overlay)?))
}

async fn get_mesh(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let sref = st.session(&id)?;
    let s = sref.read();
    let d = s
        .deformed
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_mesh", "no deformation has run in this session"))?;
    Ok((
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8"), (header::ETAG, &format!("\"{}\"", d.revision))],
        obj::to_obj(&d.value),
    )
        .into_response())
}

async fn export(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let sref = st.session(&id)?;
    let bytes = export_bundle(&sref.read())?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/zip".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{id}.zip\"")),
        ],
        bytes,
    )
        .into_response())
}

/// Debug: attach a ground-truth mask so `/debug/iou` can score the raster.
async fn upload_truth(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let truth = rvol::decode(&body)
        .and_then(|g| g.into_binary())
        .map_err(|e| ApiError::bad_request("bad_volume", e.to_string()))?;
    let sref = st.session(&id)?;
    let mut s = sref.write();
    s.volume.ensure_same_dims(&truth)?;
    s.truth = Some(truth);
    Ok(Json(json!({ "revision": s.revision })))
}

async fn debug_iou(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let sref = st.session(&id)?;
    let s = sref.read();
    let truth = s.truth.as_ref().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_truth", "upload a truth mask first"))?;
    let raster =
        s.raster.as_ref().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_raster", "no deformation has run"))?;
    Ok(Json(json!({
        "iou": iou(&raster.value, truth)?,
        "raster_revision": raster.revision,
        "stale": raster.revision != s.revision,
    })))
}

async fn serve_static(State(st): State<Arc<AppState>>, uri: axum::http::Uri) -> ApiResult<Response> {
    let root = st.config.static_dir.as_ref().expect("fallback only installed with a static dir");
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    if rel.split('/').any(|c| c == ".." || c.is_empty()) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", uri.path().to_string()));
    }
    let path = root.join(rel);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", uri.path().to_string()))?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

/// Physical bounds helper for clients building point scripts.
pub fn volume_bounds(spec: &GridSpec) -> ([f64; 3], [f64; 3]) {
    let lo = spec.origin;
    let hi = std::array::from_fn(|a| spec.origin[a] + spec.spacing[a] * spec.dims.axis_len(a) as f64);
    (lo, hi)
}
