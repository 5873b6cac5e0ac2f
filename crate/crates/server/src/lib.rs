//! HTTP review server over a pipeline output directory.
//!
//! | method | path | purpose |
//! |---|---|---|
//! | GET | `/scenes` | frames with contradiction counts, filterable and paged |
//! | GET | `/scenes/{frame}` | points, categories, pixels and clusters of one frame |
//! | GET | `/scenes/{frame}/image` | camera image, when the dataset has one |
//! | POST | `/verdicts` | record a reviewer verdict for a cluster |
//! | GET | `/verdicts/{id}` | one recorded verdict |
//! | GET | `/export/queries` | frames whose clusters were judged supervised failures |
//!
//! Binary arrays are sent as `{dtype, shape, encoding: "base64", data}` with
//! little-endian element bytes.

pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use contra_core::discrepancy::{extract_clusters, parse_manifest, ManifestRecord};
use contra_core::io;
use contra_core::pipeline::{DatasetLayout, OutputLayout, RUN_CONFIG};
use contra_core::{CalibrationSet, Config, DiscrepancyCategory, SemanticClassTable};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use store::{StoreError, Verdict, VerdictRecord, VerdictStore};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("missing {0}; run the pipeline first")]
    MissingRunFile(PathBuf),
    #[error(transparent)]
    Pipeline(#[from] contra_core::PipelineError),
    #[error(transparent)]
    Ingest(#[from] contra_core::IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Pipeline output directory (holds `run.toml`).
    pub data_root: PathBuf,
    pub verdict_log: PathBuf,
}

/// Category counts for one frame, from `discrepancy_stats.txt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FrameCounts {
    pub green: u64,
    pub blue: u64,
    pub red: u64,
    pub yellow: u64,
    pub both_valid: u64,
    pub total: u64,
}

impl FrameCounts {
    fn get(&self, c: DiscrepancyCategory) -> u64 {
        match c {
            DiscrepancyCategory::AgreeStatic => self.green,
            DiscrepancyCategory::AgreeDynamic => self.blue,
            DiscrepancyCategory::SvStaticSsvDynamic => self.red,
            DiscrepancyCategory::SvDynamicSsvStatic => self.yellow,
        }
    }
}

struct Inner {
    cfg: Config,
    dataset: DatasetLayout,
    output: OutputLayout,
    table: SemanticClassTable,
    calib: Option<CalibrationSet>,
    frames: Vec<u32>,
    counts: BTreeMap<u32, FrameCounts>,
    clusters: BTreeMap<u32, Vec<ManifestRecord>>,
    store: RwLock<VerdictStore>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn malformed(path: &Path, reason: impl Into<String>) -> ServerError {
    ServerError::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_stats(path: &Path, text: &str) -> Result<BTreeMap<u32, FrameCounts>, ServerError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() || f[0].starts_with('#') || f[0] == "total" || f[0] == "fractions" {
            continue;
        }
        let nums: Vec<u64> = f
            .iter()
            .map(|v| v.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed(path, format!("line {}: expected integers", n + 1)))?;
        if nums.len() != 7 {
            return Err(malformed(path, format!("line {}: expected 7 fields", n + 1)));
        }
        out.insert(
            nums[0] as u32,
            FrameCounts {
                green: nums[1],
                blue: nums[2],
                red: nums[3],
                yellow: nums[4],
                both_valid: nums[5],
                total: nums[6],
            },
        );
    }
    Ok(out)
}

fn read_run_file(path: PathBuf) -> Result<String, ServerError> {
    std::fs::read_to_string(&path).map_err(|_| ServerError::MissingRunFile(path))
}

impl AppState {
    pub fn load(cfg: &ServerConfig) -> Result<Self, ServerError> {
        let mut run = Config::parse(&read_run_file(cfg.data_root.join(RUN_CONFIG))?)?;
        run.resolve_relative_to(&cfg.data_root);
        run.output.dir = cfg.data_root.clone();
        let output = OutputLayout::new(&cfg.data_root);
        let dataset = DatasetLayout::new(&run.dataset.root);
        let frames = dataset.frames()?;
        let table = match &run.dataset.class_table {
            Some(p) => SemanticClassTable::load(p)?,
            None => SemanticClassTable::semantic_kitti(),
        };
        let calib = match dataset.calib() {
            p if p.is_file() => Some(io::read_calibration(&p)?),
            _ => None,
        };
        let stats_path = output.stats();
        let counts = parse_stats(&stats_path, &read_run_file(stats_path.clone())?)?;
        let manifest_path = output.contradictions();
        let records =
            parse_manifest(&read_run_file(manifest_path.clone())?).map_err(|e| malformed(&manifest_path, e))?;
        let mut clusters: BTreeMap<u32, Vec<ManifestRecord>> = BTreeMap::new();
        for r in records {
            clusters.entry(r.frame_id).or_default().push(r);
        }
        let store = VerdictStore::open(&cfg.verdict_log)?;
        Ok(Self(Arc::new(Inner {
            cfg: run,
            dataset,
            output,
            table,
            calib,
            frames,
            counts,
            clusters,
            store: RwLock::new(store),
        })))
    }

    pub fn sequence(&self) -> &str {
        &self.0.cfg.dataset.name
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scenes/{frame}", get(scene))
        .route("/scenes/{frame}/image", get(scene_image))
        .route("/verdicts", post(post_verdict))
        .route("/verdicts/{id}", get(get_verdict))
        .route("/export/queries", get(export_queries))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
pub enum ApiError {
    UnknownFrame(u32),
    UnknownCluster { frame: u32, cluster_id: u32 },
    UnknownVerdict(u64),
    InvalidVerdict(String),
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::UnknownFrame(f) => (StatusCode::NOT_FOUND, "UnknownFrame", format!("no frame {f}")),
            ApiError::UnknownCluster { frame, cluster_id } => (
                StatusCode::NOT_FOUND,
                "UnknownCluster",
                format!("frame {frame} has no cluster {cluster_id}"),
            ),
            ApiError::UnknownVerdict(id) => (StatusCode::NOT_FOUND, "UnknownVerdict", format!("no verdict {id}")),
            ApiError::InvalidVerdict(m) => (StatusCode::BAD_REQUEST, "InvalidVerdict", m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BadRequest", m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "NotFound", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal", m),
        };
        (status, Json(json!({ "error": kind, "message": message }))).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(e.to_string())
}

#[derive(Debug, Deserialize)]
pub struct ScenesQuery {
    category: Option<String>,
    status: Option<String>,
    sequence: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum ReviewStatus {
    /// Every cluster has at least one verdict (frames without clusters count
    /// as reviewed).
    Reviewed,
    Unreviewed,
}

impl Inner {
    fn status(&self, store: &VerdictStore, frame: u32) -> ReviewStatus {
        let done = self
            .clusters
            .get(&frame)
            .is_none_or(|cs| cs.iter().all(|c| store.latest(frame, c.cluster_id).is_some()));
        if done {
            ReviewStatus::Reviewed
        } else {
            ReviewStatus::Unreviewed
        }
    }

    fn cluster(&self, frame: u32, cluster_id: u32) -> Option<&ManifestRecord> {
        self.clusters.get(&frame)?.iter().find(|c| c.cluster_id == cluster_id)
    }
}

async fn list_scenes(State(state): State<AppState>, Query(q): Query<ScenesQuery>) -> Result<Json<Value>, ApiError> {
    let inner = &state.0;
    let category = q
        .category
        .as_deref()
        .map(|c| c.parse::<DiscrepancyCategory>().map_err(ApiError::BadRequest))
        .transpose()?;
    let status = match q.status.as_deref() {
        None => None,
        Some("reviewed") => Some(ReviewStatus::Reviewed),
        Some("unreviewed") => Some(ReviewStatus::Unreviewed),
        Some(s) => return Err(ApiError::BadRequest(format!("unknown status {s:?}"))),
    };
    let limit = q.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::BadRequest(format!("limit must be in 1..={MAX_PAGE}")));
    }
    let offset = q.offset.unwrap_or(0);
    let sequence = state.sequence();
    let store = inner.store.read().map_err(internal)?;
    let mut rows: Vec<(u64, u32, Value)> = Vec::new();
    if q.sequence.as_deref().is_none_or(|s| s == sequence) {
        for &frame in &inner.frames {
            let counts = inner.counts.get(&frame).copied().unwrap_or_default();
            if category.is_some_and(|c| counts.get(c) == 0) {
                continue;
            }
            let st = inner.status(&store, frame);
            if status.is_some_and(|s| s != st) {
                continue;
            }
            let n_clusters = inner.clusters.get(&frame).map_or(0, Vec::len);
            let contradictions = counts.red + counts.yellow;
            rows.push((
                contradictions,
                frame,
                json!({
                    "frame": frame,
                    "sequence": sequence,
                    "contradictions": contradictions,
                    "counts": counts,
                    "clusters": n_clusters,
                    "status": st,
                    "has_image": inner.dataset.image(frame).is_file(),
                }),
            ));
        }
    }
    rows.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let total = rows.len();
    let page: Vec<Value> = rows.into_iter().skip(offset).take(limit).map(|r| r.2).collect();
    Ok(Json(json!({ "total": total, "offset": offset, "limit": limit, "scenes": page })))
}

/// Base64 block for a little-endian array.
pub fn block(dtype: &str, shape: &[usize], bytes: &[u8]) -> Value {
    json!({
        "dtype": dtype,
        "shape": shape,
        "encoding": "base64",
        "data": base64::engine::general_purpose::STANDARD.encode(bytes),
    })
}

fn known_frame(inner: &Inner, frame: u32) -> Result<(), ApiError> {
    if inner.frames.binary_search(&frame).is_ok() {
        Ok(())
    } else {
        Err(ApiError::UnknownFrame(frame))
    }
}

async fn scene(State(state): State<AppState>, UrlPath(frame): UrlPath<u32>) -> Result<Json<Value>, ApiError> {
    let inner = state.0.clone();
    known_frame(&inner, frame)?;
    // file reads and clustering run off the async workers
    let payload = tokio::task::spawn_blocking(move || build_scene(&inner, frame))
        .await
        .map_err(internal)??;
    Ok(Json(payload))
}

fn build_scene(inner: &Inner, frame: u32) -> Result<Value, ApiError> {
    let mut cloud = io::read_scan(&inner.dataset.scan(frame)).map_err(internal)?;
    cloud.frame_id = frame;
    let disc_path = inner.output.discrepancy(frame);
    if !disc_path.is_file() {
        return Err(ApiError::NotFound(format!("no discrepancy layer for frame {frame}")));
    }
    let disc = io::read_discrepancy(&disc_path, Some(cloud.len())).map_err(internal)?;
    let valid: Vec<usize> = (0..cloud.len()).filter(|&i| disc[i].is_some()).collect();
    let mut position = vec![u32::MAX; cloud.len()];
    for (k, &i) in valid.iter().enumerate() {
        position[i] = k as u32;
    }

    let mut points = Vec::with_capacity(valid.len() * 12);
    let mut categories = Vec::with_capacity(valid.len());
    let mut indices = Vec::with_capacity(valid.len() * 4);
    let mut pixels = Vec::with_capacity(valid.len() * 8);
    let image = inner.cfg.image_size();
    for &i in &valid {
        for v in cloud.points[i] {
            points.extend_from_slice(&v.to_le_bytes());
        }
        categories.push(disc[i].expect("valid").code());
        indices.extend_from_slice(&(i as u32).to_le_bytes());
        let px = inner
            .calib
            .as_ref()
            .and_then(|c| c.project(cloud.point_f64(i)))
            .filter(|p| image.contains(p.u, p.v));
        let (u, v) = px.map_or((f32::NAN, f32::NAN), |p| (p.u as f32, p.v as f32));
        pixels.extend_from_slice(&u.to_le_bytes());
        pixels.extend_from_slice(&v.to_le_bytes());
    }

    let computed = extract_clusters(&cloud, &disc, None, &inner.cfg.discrepancy).map_err(internal)?;
    let records = inner.clusters.get(&frame).map_or(&[][..], Vec::as_slice);
    if computed.len() != records.len() {
        return Err(ApiError::Internal(format!(
            "frame {frame}: {} clusters recomputed but the manifest lists {}",
            computed.len(),
            records.len()
        )));
    }
    let store = inner.store.read().map_err(internal)?;
    let clusters: Vec<Value> = computed
        .iter()
        .zip(records)
        .map(|(c, r)| {
            let members: Vec<u8> = c
                .member_indices
                .iter()
                .flat_map(|&i| position[i].to_le_bytes())
                .collect();
            json!({
                "cluster_id": r.cluster_id,
                "category": r.category.color(),
                "point_count": r.point_count,
                "centroid": r.centroid,
                "semantic_mode": r.semantic_mode,
                "semantic_name": r.semantic_mode.and_then(|m| inner.table.name(m)),
                "members": block("uint32", &[c.member_indices.len()], &members),
                "verdict": store.latest(frame, r.cluster_id),
            })
        })
        .collect();

    let n = valid.len();
    let has_image = inner.dataset.image(frame).is_file();
    Ok(json!({
        "frame": frame,
        "sequence": inner.cfg.dataset.name,
        "n_points": cloud.len(),
        "n_valid": n,
        "points": block("float32", &[n, 3], &points),
        "categories": block("uint8", &[n], &categories),
        "indices": block("uint32", &[n], &indices),
        "pixels": block("float32", &[n, 2], &pixels),
        "category_codes": DiscrepancyCategory::ALL.iter().map(|c| json!({"code": c.code(), "color": c.color()})).collect::<Vec<_>>(),
        "clusters": clusters,
        "image": has_image.then(|| format!("/scenes/{frame}/image")),
    }))
}

async fn scene_image(State(state): State<AppState>, UrlPath(frame): UrlPath<u32>) -> Result<Response, ApiError> {
    known_frame(&state.0, frame)?;
    let path = state.0.dataset.image(frame);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::NotFound(format!("no image for frame {frame}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct VerdictRequest {
    frame: u32,
    cluster_id: u32,
    verdict: String,
    #[serde(default)]
    reviewer: Option<String>,
    #[serde(default)]
    note: Option<String>,
}

async fn post_verdict(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: VerdictRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let verdict: Verdict = req.verdict.parse().map_err(ApiError::InvalidVerdict)?;
    let inner = &state.0;
    if inner.cluster(req.frame, req.cluster_id).is_none() {
        return Err(ApiError::UnknownCluster {
            frame: req.frame,
            cluster_id: req.cluster_id,
        });
    }
    let rec = inner
        .store
        .write()
        .map_err(internal)?
        .append(req.frame, req.cluster_id, verdict, req.reviewer, req.note)
        .map_err(internal)?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn get_verdict(State(state): State<AppState>, UrlPath(id): UrlPath<u64>) -> Result<Json<VerdictRecord>, ApiError> {
    let store = state.0.store.read().map_err(internal)?;
    store.get(id).cloned().map(Json).ok_or(ApiError::UnknownVerdict(id))
}

/// Frames with at least one cluster whose latest verdict blames the
/// supervised model, one entry per frame.
async fn export_queries(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let inner = &state.0;
    let store = inner.store.read().map_err(internal)?;
    let mut queries = Vec::new();
    for (&frame, records) in &inner.clusters {
        let hits: Vec<(&ManifestRecord, Verdict)> = records
            .iter()
            .filter_map(|r| {
                let v = store.latest(frame, r.cluster_id)?.verdict;
                v.is_sv_query().then_some((r, v))
            })
            .collect();
        if hits.is_empty() {
            continue;
        }
        let mut tags = BTreeSet::new();
        for (r, v) in &hits {
            tags.insert(r.category.color().to_string());
            tags.insert(v.name().to_string());
            if let Some(name) = r.semantic_mode.and_then(|m| inner.table.name(m)) {
                tags.insert(name.to_string());
            }
        }
        queries.push(json!({
            "frame": frame,
            "sequence": inner.cfg.dataset.name,
            "clusters": hits.iter().map(|(r, v)| json!({
                "cluster_id": r.cluster_id,
                "category": r.category.color(),
                "verdict": v,
            })).collect::<Vec<_>>(),
            "tags": tags,
        }));
    }
    Ok(Json(json!({ "queries": queries })))
}
