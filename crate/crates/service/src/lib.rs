//! HTTP facade over the adforge pipeline: media catalogs, detection, corner
//! refinement and render jobs with progress and previews.

pub mod catalog;
pub mod jobs;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use adforge_core::compositor::Advert;
use adforge_core::detector::{DetectorSource, DEFAULT_BASELINE_SIGMA, DEFAULT_HEATMAP_STEM};
use adforge_core::geometry::{cross, order_corners};
use adforge_core::pipeline::{detect_keyframe, render_frames, DetectConfig, KeyframePolicy, RenderOptions, VideoSource};
use adforge_core::videoio::{self, Y4mWriter};
use adforge_core::{Error as CoreError, Point, Quad};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::jobs::{JobRecord, JobState};

/// Detector choice as it appears in requests and server defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorOptions {
    /// PGM heatmaps in `<videos_dir>/<video id>/<stem>_%06d.pgm`.
    HeatmapFiles {
        #[serde(default)]
        stem: Option<String>,
    },
    ChromaBaseline {
        color: [f64; 3],
        #[serde(default)]
        sigma: Option<f64>,
    },
}

impl DetectorOptions {
    fn to_source(&self, videos_dir: &Path, video_id: &str) -> adforge_core::Result<DetectorSource> {
        match self {
            Self::HeatmapFiles { stem } => Ok(DetectorSource::heatmap_files(
                videos_dir.join(video_id),
                stem.clone().unwrap_or_else(|| DEFAULT_HEATMAP_STEM.into()),
            )),
            Self::ChromaBaseline { color, sigma } => DetectorSource::chroma(*color, sigma.unwrap_or(DEFAULT_BASELINE_SIGMA)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub videos_dir: PathBuf,
    pub adverts_dir: PathBuf,
    /// Rendered Y4M results are written here as `<job id>.y4m`.
    pub results_dir: PathBuf,
    /// How long a finished result stays downloadable.
    pub retention: Duration,
    pub default_detector: DetectorOptions,
    pub default_threshold: f64,
}

struct Inner {
    config: ServiceConfig,
    jobs: RwLock<HashMap<String, Arc<Mutex<JobRecord>>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self(Arc::new(Inner { config, jobs: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1) }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    fn job(&self, id: &str) -> Option<Arc<Mutex<JobRecord>>> {
        self.0.jobs.read().unwrap().get(id).cloned()
    }

    fn result_path(&self, id: &str) -> PathBuf {
        self.0.config.results_dir.join(format!("{id}.y4m"))
    }

    /// Deletes result files past retention; returns how many were removed.
    pub fn sweep_expired(&self) -> usize {
        let jobs: Vec<_> = self.0.jobs.read().unwrap().values().cloned().collect();
        let mut removed = 0;
        for job in jobs {
            let (id, expired) = {
                let j = job.lock().unwrap();
                (j.id.clone(), j.finished_at.is_some_and(|t| t.elapsed() > self.0.config.retention))
            };
            if expired && std::fs::remove_file(self.result_path(&id)).is_ok() {
                removed += 1;
            }
        }
        removed
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn err(status: StatusCode, msg: impl Into<String>) -> ApiError {
    ApiError(status, msg.into())
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/videos", get(get_videos))
        .route("/adverts", get(get_adverts))
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/corners", post(confirm_corners))
        .route("/jobs/{id}/render", post(start_render))
        .route("/jobs/{id}/frames/{n}", get(get_frame))
        .route("/jobs/{id}/result", get(get_result))
        .with_state(state)
}

/// Serves until the listener fails, sweeping expired results periodically.
pub async fn serve(config: ServiceConfig, addr: std::net::SocketAddr) -> std::io::Result<()> {
    std::fs::create_dir_all(&config.results_dir)?;
    let state = AppState::new(config);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(30));
        loop {
            tick.tick().await;
            sweeper.sweep_expired();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

async fn get_videos(State(s): State<AppState>) -> ApiResult<Json<Vec<catalog::MediaEntry>>> {
    catalog::list_videos(&s.config().videos_dir).map(Json).map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e))
}

async fn get_adverts(State(s): State<AppState>) -> ApiResult<Json<Vec<catalog::MediaEntry>>> {
    catalog::list_adverts(&s.config().adverts_dir).map(Json).map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e))
}

#[derive(Debug, Deserialize)]
struct CreateJob {
    video: String,
    advert: String,
    #[serde(default)]
    detector: Option<DetectorOptions>,
    #[serde(default)]
    threshold: Option<f64>,
    #[serde(default)]
    stride: Option<usize>,
    #[serde(default)]
    cutoff: Option<f64>,
    #[serde(default)]
    min_area: Option<usize>,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed body: {e}")))
}

async fn create_job(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateJob = parse_body(&body)?;
    let cfg = s.config();
    let video = catalog::resolve(&cfg.videos_dir, &req.video, "y4m")
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown video {:?}", req.video)))?;
    if catalog::resolve(&cfg.adverts_dir, &req.advert, "png").is_none() {
        return Err(err(StatusCode::NOT_FOUND, format!("unknown advert {:?}", req.advert)));
    }
    let stream = videoio::probe_y4m(&video).map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;

    let unprocessable = |e: CoreError| err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    let source = req.detector.as_ref().unwrap_or(&cfg.default_detector).to_source(&cfg.videos_dir, &req.video).map_err(unprocessable)?;
    let defaults = KeyframePolicy::default();
    let policy = KeyframePolicy { stride: req.stride.unwrap_or(defaults.stride), cutoff: req.cutoff.unwrap_or(defaults.cutoff) };
    policy.validate().map_err(unprocessable)?;
    let threshold = req.threshold.unwrap_or(cfg.default_threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(err(StatusCode::UNPROCESSABLE_ENTITY, format!("threshold {threshold} outside [0, 1]")));
    }
    let detect = DetectConfig { source, policy, threshold, min_area: req.min_area };

    let id = format!("job-{:06}", s.0.next_id.fetch_add(1, Ordering::Relaxed));
    let mut record = JobRecord::new(id.clone(), req.video, req.advert, stream.width, stream.height, stream.frame_count);
    record.transition(JobState::Detecting).expect("created -> detecting");
    let job = Arc::new(Mutex::new(record));
    s.0.jobs.write().unwrap().insert(id.clone(), job.clone());

    tokio::task::spawn_blocking(move || {
        let outcome = detect_keyframe(&VideoSource::Y4m(video), &detect);
        let mut j = job.lock().unwrap();
        match outcome {
            Ok((k, quad)) => {
                j.keyframe = Some(k);
                j.detected = Some(quad);
                j.transition(JobState::Detected).expect("detecting -> detected");
            }
            Err(e) => {
                j.error = Some(e.to_string());
                j.transition(JobState::Failed).expect("detecting -> failed");
            }
        }
    });
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "state": JobState::Detecting }))).into_response())
}

async fn get_job(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<jobs::JobView>> {
    let job = s.job(&id).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown job {id}")))?;
    let view = job.lock().unwrap().view();
    Ok(Json(view))
}

/// Corner sequence as submitted forms a convex polygon, in either winding.
fn is_convex_cycle(c: &[Point; 4]) -> bool {
    let turns: Vec<f64> = (0..4).map(|i| cross(c[i], c[(i + 1) % 4], c[(i + 2) % 4])).collect();
    turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0)
}

fn validate_corners(body: &Value, width: usize, height: usize, frame_count: usize) -> Result<(usize, Quad), String> {
    let frame = body
        .get("frame")
        .and_then(Value::as_u64)
        .ok_or("\"frame\" must be a non-negative integer")? as usize;
    if frame >= frame_count {
        return Err(format!("frame {frame} beyond the video's {frame_count} frames"));
    }
    let corners = videoio::parse_corners(body.get("corners").ok_or("missing \"corners\"")?).map_err(|e| e.to_string())?;
    let in_bounds = corners
        .iter()
        .all(|p| p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64);
    if !in_bounds {
        return Err("corners outside the frame".into());
    }
    if !is_convex_cycle(&corners) {
        return Err("corners do not form a convex quadrilateral".into());
    }
    let quad = order_corners(corners).map_err(|e| e.to_string())?;
    Ok((frame, quad))
}

async fn confirm_corners(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<jobs::JobView>> {
    let job = s.job(&id).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown job {id}")))?;
    let body: Value = parse_body(&body)?;
    let mut j = job.lock().unwrap();
    if !matches!(j.state(), JobState::Detected | JobState::CornersConfirmed) {
        return Err(err(StatusCode::CONFLICT, format!("cannot confirm corners in state {:?}", j.state())));
    }
    let (frame, quad) = validate_corners(&body, j.width, j.height, j.frame_count).map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    j.transition(JobState::CornersConfirmed).map_err(|e| err(StatusCode::CONFLICT, e.to_string()))?;
    j.keyframe = Some(frame);
    j.confirmed = Some(quad);
    Ok(Json(j.view()))
}

async fn start_render(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let job = s.job(&id).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown job {id}")))?;
    let opts: RenderOptions = if body.iter().all(u8::is_ascii_whitespace) { RenderOptions::default() } else { parse_body(&body)? };
    opts.blend.validate().map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    opts.track.validate().map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let (video, advert, keyframe, quad) = {
        let mut j = job.lock().unwrap();
        if j.state() != JobState::CornersConfirmed {
            return Err(err(StatusCode::CONFLICT, format!("cannot render in state {:?}; confirm corners first", j.state())));
        }
        j.transition(JobState::Rendering).map_err(|e| err(StatusCode::CONFLICT, e.to_string()))?;
        (j.video.clone(), j.advert.clone(), j.keyframe.expect("confirmed"), j.confirmed.expect("confirmed"))
    };
    let cfg = s.config().clone();
    let out_path = s.result_path(&id);
    tokio::task::spawn_blocking(move || {
        let outcome = render_job(&cfg, &job, &video, &advert, keyframe, quad, &opts, &out_path);
        let mut j = job.lock().unwrap();
        match outcome {
            Ok(report) => {
                j.report = Some(report);
                j.advance_progress(1.0);
                j.finished_at = Some(Instant::now());
                j.transition(JobState::Done).expect("rendering -> done");
            }
            Err(e) => {
                j.error = Some(e.to_string());
                j.transition(JobState::Failed).expect("rendering -> failed");
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id, "state": JobState::Rendering }))).into_response())
}

#[allow(clippy::too_many_arguments)]
fn render_job(
    cfg: &ServiceConfig,
    job: &Mutex<JobRecord>,
    video: &str,
    advert: &str,
    keyframe: usize,
    quad: Quad,
    opts: &RenderOptions,
    out_path: &Path,
) -> adforge_core::Result<adforge_core::pipeline::RenderReport> {
    let video_path = cfg.videos_dir.join(format!("{video}.y4m"));
    let advert = Advert::new(videoio::load_png(&cfg.adverts_dir.join(format!("{advert}.png")))?)?;
    let (stream, frames) = videoio::read_y4m(&video_path)?;
    std::fs::create_dir_all(&cfg.results_dir).map_err(|source| CoreError::Io { path: cfg.results_dir.clone(), source })?;
    // Written under a temporary name so a partial file is never served.
    let tmp = out_path.with_extension("y4m.part");
    let mut writer = Y4mWriter::create(&tmp, stream.width, stream.height, stream.frame_rate)?;
    let total = stream.frame_count.max(1) as f64;
    let report = render_frames(
        frames,
        &advert,
        keyframe,
        quad,
        opts,
        |_, frame| {
            writer.write_frame(frame)?;
            let png = videoio::encode_png(frame)?;
            let mut j = job.lock().unwrap();
            j.previews.push(png);
            let done = j.previews.len() as f64;
            j.advance_progress(done / total);
            Ok(())
        },
        |_| {},
    )?;
    writer.finish()?;
    std::fs::rename(&tmp, out_path).map_err(|source| CoreError::Io { path: out_path.to_path_buf(), source })?;
    Ok(report)
}

async fn get_frame(State(s): State<AppState>, UrlPath((id, n)): UrlPath<(String, usize)>) -> ApiResult<Response> {
    let job = s.job(&id).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown job {id}")))?;
    let png = job.lock().unwrap().previews.get(n).cloned();
    match png {
        Some(bytes) => Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response()),
        None => Err(err(StatusCode::NOT_FOUND, format!("frame {n} has not been rendered"))),
    }
}

async fn get_result(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let job = s.job(&id).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown job {id}")))?;
    let finished_at = {
        let j = job.lock().unwrap();
        if j.state() != JobState::Done {
            return Err(err(StatusCode::CONFLICT, format!("no result in state {:?}", j.state())));
        }
        j.finished_at.expect("done jobs have a finish time")
    };
    if finished_at.elapsed() > s.config().retention {
        return Err(err(StatusCode::GONE, "result expired"));
    }
    let path = s.result_path(&id);
    let bytes = tokio::fs::read(&path).await.map_err(|_| err(StatusCode::GONE, "result no longer stored"))?;
    Ok(([(header::CONTENT_TYPE, "video/x-yuv4mpeg")], bytes).into_response())
}
