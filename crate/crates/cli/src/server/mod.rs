//! HTTP/JSON service over one session.
//!
//! Reads run against the current session snapshot. Edits and adjustment runs
//! take the session write lock and are refused with 409 while a job is
//! running. Runs execute as background jobs that clients poll.

mod error;
mod jobs;

pub use error::ApiError;
pub use jobs::{JobProgress, JobState, JobStatus};

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;
use tracing::{info, warn};

use vector_core::analysis::{
    angular_concentration, default_histogram, image_summary, radial, rank_images, rank_tracks,
    FilterState, HistogramData, ImageSummary, RadialData, RankKey,
};
use vector_core::bundle_adjust::{run_ba_with_progress, BAConfig, BAResult, BaError};
use vector_core::geometry::{
    residual_records, triangulation_angle, Camera, Intrinsics, Pose, ResidualKind, ResidualRecord,
    ILL_POSED_ANGLE_DEG,
};
use vector_core::nalgebra::{self, Vector3};
use vector_core::session::{save_session, EditKind, Session};

use crate::views::{report, RunSummary};
use jobs::{Job, Jobs};

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    session: RwLock<Session>,
    /// Where edits and runs are persisted; `None` keeps them in memory only.
    session_path: Option<PathBuf>,
    image_root: PathBuf,
    jobs: Mutex<Jobs>,
}

impl AppState {
    pub fn new(session: Session, session_path: Option<PathBuf>) -> Arc<Self> {
        let cameras = &session.base_ref().cameras_path;
        let cameras = match &session_path {
            Some(p) if cameras.is_relative() => p.parent().unwrap_or(Path::new("")).join(cameras),
            _ => cameras.clone(),
        };
        let image_root = cameras.parent().unwrap_or(Path::new(".")).to_path_buf();
        Arc::new(Self {
            session: RwLock::new(session),
            session_path,
            image_root,
            jobs: Mutex::new(Jobs::default()),
        })
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, Jobs> {
        self.jobs.lock().expect("jobs lock")
    }

    fn persist(&self, session: &Session) -> ApiResult<()> {
        if let Some(p) = &self.session_path {
            save_session(session, p)?;
        }
        Ok(())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/scene", get(scene))
        .route("/api/images", get(images))
        .route("/api/images/{camera_id}", get(image))
        .route(
            "/api/cameras/{camera_id}",
            axum::routing::delete(delete_camera),
        )
        .route("/api/tracks/{track_id}", get(track).delete(delete_track))
        .route("/api/stats", get(stats))
        .route("/api/rank/tracks", get(rank_tracks_route))
        .route("/api/rank/images", get(rank_images_route))
        .route("/api/edits", get(list_edits).post(post_edit))
        .route("/api/ba/run", post(start_run))
        .route("/api/jobs/{job_id}", get(job_status))
        .route("/api/jobs/{job_id}/cancel", post(cancel_job))
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{run_id}", get(get_run))
        .route("/api/compare", get(compare))
        .route("/api/report", get(get_report))
        .route("/static/images/{*path}", get(static_image))
        .with_state(state)
}

/// Serves `session` on `addr` until interrupted.
pub async fn serve(
    session: Session,
    session_path: PathBuf,
    addr: SocketAddr,
) -> std::io::Result<()> {
    let state = AppState::new(session, Some(session_path));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// A JSON body plus an optional `Warning` header about ignored query parameters.
struct Reply<T> {
    status: StatusCode,
    body: T,
    warning: Option<String>,
}

impl<T: Serialize> IntoResponse for Reply<T> {
    fn into_response(self) -> Response {
        let mut r = (self.status, Json(self.body)).into_response();
        if let Some(w) = self.warning.and_then(|w| HeaderValue::from_str(&w).ok()) {
            r.headers_mut().insert(header::WARNING, w);
        }
        r
    }
}

type Params = Query<HashMap<String, String>>;

fn reply<T>(body: T, params: &HashMap<String, String>, allowed: &[&str]) -> Reply<T> {
    let mut unknown: Vec<&str> = params
        .keys()
        .map(String::as_str)
        .filter(|k| !allowed.contains(k))
        .collect();
    unknown.sort_unstable();
    let warning = (!unknown.is_empty()).then(|| {
        format!(
            "299 vector \"ignored unknown query parameter(s): {}\"",
            unknown.join(", ")
        )
    });
    Reply {
        status: StatusCode::OK,
        body,
        warning,
    }
}

fn parse_filter(params: &HashMap<String, String>) -> ApiResult<FilterState> {
    let f: FilterState = match params.get("filter") {
        None => FilterState::default(),
        Some(s) if s.trim().is_empty() => FilterState::default(),
        Some(s) => {
            serde_json::from_str(s).map_err(|e| ApiError::bad_request(format!("filter: {e}")))?
        }
    };
    f.validate()?;
    Ok(f)
}

fn parse_key(params: &HashMap<String, String>) -> ApiResult<RankKey> {
    match params.get("key") {
        None => Ok(RankKey::MaxFinalLength),
        Some(k) => k.parse().map_err(ApiError::bad_request),
    }
}

/// Final state of the latest run, keyed by id, plus the residuals of the
/// observations still present in the effective dataset.
struct Current {
    run_id: Option<String>,
    poses: HashMap<String, Pose>,
    points: HashMap<String, Vector3<f64>>,
    residuals: Vec<ResidualRecord>,
}

fn current(session: &Session) -> ApiResult<Current> {
    let effective = session.effective();
    let Some(run) = session.latest_run() else {
        let mut residuals =
            residual_records(&effective.cameras, &effective.tracks, ResidualKind::Initial)
                .map_err(|e| {
                    ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        "invalid_dataset",
                        e.to_string(),
                    )
                })?;
        let mut poses = HashMap::new();
        let mut points = HashMap::new();
        if effective.has_final_state() {
            if let Ok(f) =
                residual_records(&effective.cameras, &effective.tracks, ResidualKind::Final)
            {
                residuals.extend(f);
                poses = effective
                    .cameras
                    .iter()
                    .filter_map(|c| c.pose_final.map(|p| (c.id.clone(), p)))
                    .collect();
                points = effective
                    .tracks
                    .iter()
                    .filter_map(|t| t.point_final.map(|p| (t.id.clone(), p)))
                    .collect();
            }
        }
        return Ok(Current {
            run_id: None,
            poses,
            points,
            residuals,
        });
    };
    let d = session.run_dataset(run)?;
    let live: HashSet<(&str, &str)> = effective
        .tracks
        .iter()
        .flat_map(|t| {
            t.observations
                .iter()
                .map(move |o| (o.camera_id.as_str(), t.id.as_str()))
        })
        .collect();
    let r: &BAResult = &run.result;
    Ok(Current {
        run_id: Some(run.id.clone()),
        poses: d
            .cameras
            .iter()
            .map(|c| c.id.clone())
            .zip(r.poses_final.iter().copied())
            .collect(),
        points: d
            .tracks
            .iter()
            .map(|t| t.id.clone())
            .zip(r.points_final.iter().copied())
            .collect(),
        residuals: r
            .residuals_initial
            .iter()
            .chain(&r.residuals_final)
            .filter(|x| live.contains(&(x.camera_id.as_str(), x.track_id.as_str())))
            .cloned()
            .collect(),
    })
}

#[derive(Serialize)]
struct SceneCamera {
    id: String,
    image_ref: String,
    intrinsics: Intrinsics,
    pose_initial: Pose,
    pose_final: Option<Pose>,
}

#[derive(Serialize)]
struct ScenePoint {
    track_id: String,
    initial: Vector3<f64>,
    #[serde(rename = "final")]
    final_: Option<Vector3<f64>>,
    n_observations: usize,
}

#[derive(Serialize)]
struct Scene {
    run_id: Option<String>,
    cameras: Vec<SceneCamera>,
    points: Vec<ScenePoint>,
}

async fn scene(State(st): State<Arc<AppState>>, Query(q): Params) -> ApiResult<Reply<Scene>> {
    let s = st.session.read().await;
    let cur = current(&s)?;
    let d = s.effective();
    let body = Scene {
        run_id: cur.run_id.clone(),
        cameras: d
            .cameras
            .iter()
            .map(|c| SceneCamera {
                id: c.id.clone(),
                image_ref: c.image_ref.clone(),
                intrinsics: c.intrinsics,
                pose_initial: c.pose_initial,
                pose_final: cur.poses.get(&c.id).copied(),
            })
            .collect(),
        points: d
            .tracks
            .iter()
            .map(|t| ScenePoint {
                track_id: t.id.clone(),
                initial: t.point_initial,
                final_: cur.points.get(&t.id).copied(),
                n_observations: t.observations.len(),
            })
            .collect(),
    };
    Ok(reply(body, &q, &[]))
}

#[derive(Serialize)]
struct ImageCard {
    camera_id: String,
    image_ref: String,
    n_observations: usize,
    max_final_length: Option<f64>,
    mean_final_length: Option<f64>,
    delta_rms: Option<f64>,
    concentration: Option<f64>,
}

async fn images(
    State(st): State<Arc<AppState>>,
    Query(q): Params,
) -> ApiResult<Reply<Vec<ImageCard>>> {
    let s = st.session.read().await;
    let d = s.effective();
    let scores: HashMap<String, _> = match s.latest_run() {
        Some(run) => rank_images(d, Some(&run.result), RankKey::MaxFinalLength)?
            .into_iter()
            .map(|i| (i.camera_id.clone(), i.stats))
            .collect(),
        None => HashMap::new(),
    };
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &d.tracks {
        for o in &t.observations {
            *counts.entry(o.camera_id.as_str()).or_default() += 1;
        }
    }
    let cards = d
        .cameras
        .iter()
        .map(|c| {
            let st = scores.get(&c.id);
            ImageCard {
                camera_id: c.id.clone(),
                image_ref: c.image_ref.clone(),
                n_observations: counts.get(c.id.as_str()).copied().unwrap_or(0),
                max_final_length: st.map(|x| x.max_final_length),
                mean_final_length: st.map(|x| x.mean_final_length),
                delta_rms: st.map(|x| x.delta_rms),
                concentration: st.map(|x| x.concentration),
            }
        })
        .collect();
    Ok(reply(cards, &q, &[]))
}

#[derive(Serialize)]
struct ImageDetail {
    camera: Camera,
    summary: ImageSummary,
    /// Filtered residuals of this image, for the overlay.
    residuals: Vec<ResidualRecord>,
    scale: f64,
}

async fn image(
    State(st): State<Arc<AppState>>,
    UrlPath(camera_id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Reply<ImageDetail>> {
    let filter = parse_filter(&q)?;
    let s = st.session.read().await;
    let mut camera = s
        .effective()
        .camera(&camera_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown camera `{camera_id}`")))?;
    let cur = current(&s)?;
    camera.pose_final = cur.poses.get(&camera_id).copied();
    let residuals: Vec<ResidualRecord> = cur
        .residuals
        .into_iter()
        .filter(|r| r.camera_id == camera_id && filter.accepts(r))
        .collect();
    let body = ImageDetail {
        summary: image_summary(&camera_id, &residuals),
        camera,
        residuals,
        scale: filter.scale,
    };
    Ok(reply(body, &q, &["filter"]))
}

#[derive(Serialize)]
struct TrackObservation {
    camera_id: String,
    image_ref: Option<String>,
    pixel: nalgebra::Vector2<f64>,
}

#[derive(Serialize)]
struct TrackDetail {
    track_id: String,
    deleted: bool,
    observations: Vec<TrackObservation>,
    point_initial: Vector3<f64>,
    point_final: Option<Vector3<f64>>,
    triangulation_angle: f64,
    ill_posed: bool,
    residuals: Vec<ResidualRecord>,
}

async fn track(
    State(st): State<Arc<AppState>>,
    UrlPath(track_id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Reply<TrackDetail>> {
    let s = st.session.read().await;
    let live = s.effective().track(&track_id);
    let t = live
        .or_else(|| s.base().track(&track_id))
        .ok_or_else(|| ApiError::not_found(format!("unknown track `{track_id}`")))?
        .clone();
    let cur = current(&s)?;
    let cameras = &s.base().cameras;
    let angle = triangulation_angle(&t, cameras);
    let body = TrackDetail {
        deleted: live.is_none(),
        observations: t
            .observations
            .iter()
            .map(|o| TrackObservation {
                camera_id: o.camera_id.clone(),
                image_ref: s.base().camera(&o.camera_id).map(|c| c.image_ref.clone()),
                pixel: o.pixel,
            })
            .collect(),
        point_initial: t.point_initial,
        point_final: cur.points.get(&track_id).copied(),
        triangulation_angle: angle,
        ill_posed: angle < ILL_POSED_ANGLE_DEG,
        residuals: cur
            .residuals
            .into_iter()
            .filter(|r| r.track_id == track_id)
            .collect(),
        track_id,
    };
    Ok(reply(body, &q, &[]))
}

#[derive(Serialize)]
struct Stats {
    count: usize,
    n_initial: usize,
    n_final: usize,
    rms: f64,
    histogram: HistogramData,
    radial: RadialData,
    concentration: Option<f64>,
    scale: f64,
}

async fn stats(State(st): State<Arc<AppState>>, Query(q): Params) -> ApiResult<Reply<Stats>> {
    let filter = parse_filter(&q)?;
    let s = st.session.read().await;
    let residuals: Vec<ResidualRecord> = current(&s)?
        .residuals
        .into_iter()
        .filter(|r| filter.accepts(r))
        .collect();
    let n_initial = residuals
        .iter()
        .filter(|r| r.kind == ResidualKind::Initial)
        .count();
    let body = Stats {
        count: residuals.len(),
        n_initial,
        n_final: residuals.len() - n_initial,
        rms: vector_core::bundle_adjust::rms(&residuals),
        histogram: default_histogram(&residuals),
        radial: radial(&residuals),
        concentration: angular_concentration(&residuals).ok(),
        scale: filter.scale,
    };
    Ok(reply(body, &q, &["filter"]))
}

async fn rank_tracks_route(
    State(st): State<Arc<AppState>>,
    Query(q): Params,
) -> ApiResult<impl IntoResponse> {
    let key = parse_key(&q)?;
    let s = st.session.read().await;
    let ranked = rank_tracks(s.effective(), s.latest_run().map(|r| &r.result), key)?;
    Ok(reply(ranked, &q, &["key"]))
}

async fn rank_images_route(
    State(st): State<Arc<AppState>>,
    Query(q): Params,
) -> ApiResult<impl IntoResponse> {
    let key = parse_key(&q)?;
    let s = st.session.read().await;
    let ranked = rank_images(s.effective(), s.latest_run().map(|r| &r.result), key)?;
    Ok(reply(ranked, &q, &["key"]))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    kind: EditKind,
    target_id: String,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

async fn apply_edit(st: &AppState, kind: EditKind, target_id: &str) -> ApiResult<Response> {
    let mut s = st.session.write().await;
    if st.jobs().is_busy() {
        return Err(ApiError::busy());
    }
    let outcome = s.apply(kind, target_id)?;
    st.persist(&s)?;
    info!(?kind, target_id, "edit applied");
    Ok(Json(outcome).into_response())
}

async fn post_edit(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: EditRequest = parse_body(&body)?;
    apply_edit(&st, req.kind, &req.target_id).await
}

async fn delete_track(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    apply_edit(&st, EditKind::DeleteTrack, &id).await
}

async fn delete_camera(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    apply_edit(&st, EditKind::DeleteCamera, &id).await
}

async fn list_edits(State(st): State<Arc<AppState>>, Query(q): Params) -> impl IntoResponse {
    let s = st.session.read().await;
    reply(s.edits().to_vec(), &q, &[])
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    #[serde(default)]
    config: BAConfig,
}

async fn start_run(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: RunRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RunRequest::default()
    } else {
        parse_body(&body)?
    };
    req.config.validate()?;
    let (job, prepared) = {
        let s = st.session.write().await;
        let mut jobs = st.jobs();
        if jobs.is_busy() {
            return Err(ApiError::busy());
        }
        let prepared = s.prepare_run()?;
        (jobs.start(), prepared)
    };
    let status = job.status();
    let config = req.config;
    let state = st.clone();
    tokio::spawn(async move {
        let worker = job.clone();
        let dataset = prepared.dataset.clone();
        let cfg = config.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            if !worker.advance(JobState::Running) {
                return Err(BaError::Cancelled);
            }
            run_ba_with_progress(&dataset, &cfg, |p| {
                worker.set_progress(p.iteration, p.cost);
                !worker.cancel_requested()
            })
        })
        .await;
        let mut s = state.session.write().await;
        match outcome {
            Ok(Ok(result)) => {
                let id = s.record_run(prepared, config, result);
                if let Err(e) = state.persist(&s) {
                    warn!("could not save session after {id}: {}", e.message);
                }
                info!("{id} recorded");
                job.finish(JobState::Done, Some(id), None);
            }
            Ok(Err(BaError::Cancelled)) => job.finish(JobState::Cancelled, None, None),
            Ok(Err(e)) => job.finish(JobState::Failed, None, Some(e.to_string())),
            Err(e) => job.finish(JobState::Failed, None, Some(format!("job panicked: {e}"))),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(status)).into_response())
}

fn find_job(st: &AppState, id: &str) -> ApiResult<Arc<Job>> {
    st.jobs().get(id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_job",
            format!("unknown job `{id}`"),
        )
    })
}

async fn job_status(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Reply<JobStatus>> {
    Ok(reply(find_job(&st, &id)?.status(), &q, &[]))
}

async fn cancel_job(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let job = find_job(&st, &id)?;
    job.request_cancel();
    Ok((StatusCode::ACCEPTED, Json(job.status())).into_response())
}

async fn list_runs(State(st): State<Arc<AppState>>, Query(q): Params) -> impl IntoResponse {
    let s = st.session.read().await;
    reply(
        s.runs().iter().map(RunSummary::from).collect::<Vec<_>>(),
        &q,
        &[],
    )
}

async fn get_run(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<impl IntoResponse> {
    let s = st.session.read().await;
    Ok(reply(RunSummary::from(s.run(&id)?), &q, &[]))
}

async fn compare(
    State(st): State<Arc<AppState>>,
    Query(q): Params,
) -> ApiResult<impl IntoResponse> {
    let (Some(a), Some(b)) = (q.get("a"), q.get("b")) else {
        return Err(ApiError::bad_request(
            "compare needs query parameters `a` and `b`",
        ));
    };
    let s = st.session.read().await;
    Ok(reply(s.compare(a, b)?, &q, &["a", "b"]))
}

async fn get_report(
    State(st): State<Arc<AppState>>,
    Query(q): Params,
) -> ApiResult<impl IntoResponse> {
    let s = st.session.read().await;
    Ok(reply(report(&s)?, &q, &[]))
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("tif" | "tiff") => "image/tiff",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn static_image(
    State(st): State<Arc<AppState>>,
    UrlPath(path): UrlPath<String>,
) -> ApiResult<Response> {
    let rel = Path::new(&path);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::bad_request(
            "image paths must stay inside the image directory",
        ));
    }
    let full = st.image_root.join(rel);
    let bytes = tokio::fs::read(&full)
        .await
        .map_err(|_| ApiError::not_found(format!("no image at `{path}`")))?;
    Ok(([(header::CONTENT_TYPE, content_type(rel))], bytes).into_response())
}
