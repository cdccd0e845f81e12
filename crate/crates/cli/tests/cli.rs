use std::path::Path;
use std::process::{Command, Output};

use adforge_core::videoio::{list_sequence, read_corners_json, read_y4m_frames};
use adforge_core::Quad;
use serde_json::{json, Value};

fn adforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adforge")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = adforge(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const FRAMES: usize = 8;

/// Synthesizes a small drifting scene into `dir`; returns the ground truth.
fn synth(dir: &Path) -> Vec<Value> {
    let spec = json!({
        "width": 128, "height": 96, "frame_count": FRAMES, "seed": 5,
        "quad": [[32, 24], [95, 24], [95, 71], [32, 71]],
        "motion": {"drift": {"translation": [0.5, 0.25], "perspective": [0.0, 0.0]}},
        "margin": 4
    });
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    ok(&["synth", "--spec", p(&spec_path), "--out-dir", p(dir)]);
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("ground_truth.json")).unwrap()).unwrap();
    truth.as_array().unwrap().clone()
}

fn quad(v: &Value) -> Quad {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn synth_writes_scene_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let truth = synth(dir.path());
    assert_eq!(truth.len(), FRAMES);
    assert_eq!(truth[0]["frame"], 0);
    assert_eq!(quad(&truth[0]["corners"]), Quad::rect(32.0, 24.0, 95.0, 71.0).unwrap());
    // Pure translation: each frame moves the corners by exactly (0.5, 0.25).
    let c3 = quad(&truth[3]["corners"]);
    let c0 = quad(&truth[0]["corners"]);
    for (a, b) in c0.corners().iter().zip(c3.corners()) {
        assert!((b.x - a.x - 1.5).abs() < 1e-9 && (b.y - a.y - 0.75).abs() < 1e-9);
    }
    let (stream, frames) = read_y4m_frames(&dir.path().join("video.y4m")).unwrap();
    assert_eq!((stream.width, stream.height, frames.len()), (128, 96, FRAMES));
    let heatmaps = std::fs::read_dir(dir.path().join("heatmaps")).unwrap().count();
    assert_eq!(heatmaps, FRAMES);
    assert!(dir.path().join("billboard.png").is_file());
}

#[test]
fn detect_then_render_with_confirmed_corners() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = synth(d);
    let video = d.join("video.y4m");
    let corners = d.join("corners.json");
    ok(&["detect", "--video", p(&video), "--heatmap-dir", p(&d.join("heatmaps")), "--out", p(&corners)]);
    let found = read_corners_json(&corners).unwrap();
    assert_eq!(found.frame, 0);
    assert!(found.corners.max_corner_distance(&quad(&truth[0]["corners"])) <= 1.5);

    // Same answer on stdout.
    let out = ok(&["detect", "--video", p(&video), "--heatmap-dir", p(&d.join("heatmaps"))]);
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["frame"], 0);
    assert_eq!(quad(&printed["corners"]), found.corners);

    let (out_a, out_b, report) = (d.join("a.y4m"), d.join("b.y4m"), d.join("report.json"));
    let advert = d.join("billboard.png");
    for out in [&out_a, &out_b] {
        ok(&[
            "render", "--video", p(&video), "--advert", p(&advert), "--corners", p(&corners),
            "--blend", "poisson", "--out", p(out), "--report", p(&report),
        ]);
    }
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap(), "renders are deterministic");
    let (_, frames) = read_y4m_frames(&out_a).unwrap();
    assert_eq!(frames.len(), FRAMES);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["keyframe_index"], 0);
    assert_eq!(r["total_frames_rendered"], FRAMES);
    assert_eq!(r["termination"]["kind"], "completed");
    let statuses: Vec<&str> = r["frames"].as_array().unwrap().iter().map(|f| f["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, vec!["rendered"; FRAMES]);
    for (f, t) in r["frames"].as_array().unwrap().iter().zip(&truth) {
        assert!(quad(&f["corners"]).max_corner_distance(&quad(&t["corners"])) < 1.5, "{f}");
    }
}

#[test]
fn render_with_chroma_detection_to_png_frames() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let frames_dir = d.join("frames");
    ok(&[
        "render", "--video", p(&d.join("video.y4m")), "--advert", p(&d.join("billboard.png")),
        "--baseline-color", "0.1,0.75,0.2", "--baseline-sigma", "0.2", "--blend", "direct",
        "--klt-window", "6", "--out-dir", p(&frames_dir), "--out-pattern", "out_%04d.png",
    ]);
    let listed = list_sequence(&frames_dir, "out_%04d.png").unwrap();
    assert_eq!(listed.len(), FRAMES);
    assert_eq!(listed[0].1.file_name().unwrap(), "out_0000.png");
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let video = d.join("video.y4m");

    let out = adforge(&["detect", "--video", p(&video)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--heatmap-dir or --baseline-color"));

    let out = adforge(&["detect", "--video", p(&video), "--baseline-color", "0.9,0.1"]);
    assert_eq!(out.status.code(), Some(2), "clap rejects malformed colors");

    let out = adforge(&["detect", "--video", p(&video), "--baseline-color", "1,0,1", "--baseline-sigma", "0.05"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no billboard found"));

    let out = adforge(&["detect", "--video", p(&d.join("missing.y4m")), "--heatmap-dir", p(d)]);
    assert_eq!(out.status.code(), Some(1));

    let out = adforge(&[
        "render", "--video", p(&video), "--advert", p(&d.join("billboard.png")), "--heatmap-dir", p(&d.join("heatmaps")),
        "--solver-tol", "0", "--out", p(&d.join("x.y4m")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("x.y4m").exists());
}
