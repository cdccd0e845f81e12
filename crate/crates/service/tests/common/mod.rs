#![allow(dead_code)]

pub mod sequences;

use std::path::{Path, PathBuf};
use std::time::Duration;

use adforge_core::detector::{heatmap_path, write_heatmap_pgm, PgmDepth};
use adforge_core::pipeline::{generate_synthetic_scene, Motion, SceneSpec};
use adforge_core::videoio::{save_png, write_y4m, FrameRate};
use adforge_core::{Frame, Quad};
use adforge_service::{router, AppState, DetectorOptions, ServiceConfig};
use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const GREEN: [f64; 3] = [0.1, 0.75, 0.2];
pub const WIDTH: usize = 96;
pub const HEIGHT: usize = 72;
pub const FRAMES: usize = 5;

pub fn billboard() -> Quad {
    Quad::rect(24.0, 18.0, 71.0, 53.0).unwrap()
}

/// Media directories holding `clip.y4m` (with heatmaps under `clip/`),
/// `blank.y4m` (no billboard) and the `logo.png` advert.
pub struct Media {
    pub root: tempfile::TempDir,
}

impl Media {
    pub fn videos(&self) -> PathBuf {
        self.root.path().join("videos")
    }
    pub fn adverts(&self) -> PathBuf {
        self.root.path().join("adverts")
    }
}

pub fn media() -> Media {
    let root = tempfile::tempdir().unwrap();
    let videos = root.path().join("videos");
    let adverts = root.path().join("adverts");
    std::fs::create_dir_all(videos.join("clip")).unwrap();
    std::fs::create_dir_all(&adverts).unwrap();

    let spec = SceneSpec {
        width: WIDTH,
        height: HEIGHT,
        frame_count: FRAMES,
        seed: 3,
        quad: billboard(),
        motion: Motion::Drift { translation: [0.3, 0.2], perspective: [0.0, 0.0] },
        margin: 4.0,
        billboard_color: GREEN,
    };
    let scene = generate_synthetic_scene(&spec).unwrap();
    write_y4m(&videos.join("clip.y4m"), WIDTH, HEIGHT, FrameRate::default(), &scene.frames).unwrap();
    for (i, h) in scene.heatmaps.iter().enumerate() {
        write_heatmap_pgm(&heatmap_path(&videos.join("clip"), "heatmap", i), h, PgmDepth::Eight).unwrap();
    }
    let blank = vec![Frame::filled(WIDTH, HEIGHT, [0.5, 0.4, 0.45]).unwrap(); 3];
    write_y4m(&videos.join("blank.y4m"), WIDTH, HEIGHT, FrameRate::default(), &blank).unwrap();

    let logo = Frame::from_fn(20, 15, |x, y| if (x / 4 + y / 4) % 2 == 0 { [0.9, 0.2, 0.1] } else { [0.1, 0.1, 0.8] });
    save_png(&adverts.join("logo.png"), &logo).unwrap();
    Media { root }
}

pub fn config(media: &Media, results: &Path) -> ServiceConfig {
    ServiceConfig {
        videos_dir: media.videos(),
        adverts_dir: media.adverts(),
        results_dir: results.to_path_buf(),
        retention: Duration::from_secs(3600),
        default_detector: DetectorOptions::HeatmapFiles { stem: None },
        default_threshold: 0.5,
    }
}

pub fn app(cfg: ServiceConfig) -> Router {
    router(AppState::new(cfg))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Bytes) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

pub async fn call_json(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

pub async fn job(app: &Router, id: &str) -> Value {
    let (s, v) = call_json(app, "GET", &format!("/jobs/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    v
}

/// Polls until the job leaves its busy state; returns every view observed.
pub async fn settle(app: &Router, id: &str) -> Vec<Value> {
    let mut seen = Vec::new();
    for _ in 0..20_000 {
        let v = job(app, id).await;
        let busy = matches!(v["state"].as_str(), Some("detecting" | "rendering"));
        seen.push(v);
        if !busy {
            return seen;
        }
        tokio::time::sleep(Duration::from_millis(1)).await;
    }
    panic!("job {id} never settled: {:?}", seen.last());
}

pub async fn create(app: &Router, body: &str) -> String {
    let (s, v) = call_json(app, "POST", "/jobs", Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}
