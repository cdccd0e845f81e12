use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use adforge_core::compositor::{BlendConfig, BlendMode};
use adforge_core::detector::{heatmap_path, write_heatmap_pgm, DetectorSource, PgmDepth, DEFAULT_BASELINE_SIGMA, DEFAULT_HEATMAP_STEM};
use adforge_core::maskops::DEFAULT_THRESHOLD;
use adforge_core::pipeline::{
    detect_keyframe, generate_synthetic_scene, run_job, DetectConfig, JobConfig, KeyframePolicy, OutputTarget, RenderOptions, SceneSpec,
    VideoSource,
};
use adforge_core::tracker::TrackParams;
use adforge_core::videoio::{read_corners_json, save_png, write_corners_json, write_y4m, FrameRate};
use adforge_core::{Error, Homography, Quad, Result};
use adforge_service::{DetectorOptions, ServiceConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "adforge", version, about = "Detect, track and replace billboards in video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the keyframe and billboard corners; writes corner JSON.
    Detect {
        #[command(flatten)]
        video: VideoArgs,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Corner JSON output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track the billboard and composite the advert into every frame.
    Render(Box<RenderArgs>),
    /// Generate a synthetic scene with ground truth from a JSON scene spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct VideoArgs {
    /// A .y4m file, or a directory of PNG frames.
    #[arg(long)]
    video: PathBuf,
    /// File name pattern of a PNG frame directory.
    #[arg(long, default_value = "frame_%06d.png")]
    pattern: String,
}

impl VideoArgs {
    fn source(&self) -> VideoSource {
        if self.video.is_dir() {
            VideoSource::PngSequence { dir: self.video.clone(), pattern: self.pattern.clone() }
        } else {
            VideoSource::Y4m(self.video.clone())
        }
    }
}

#[derive(Args)]
struct DetectorArgs {
    /// Directory of per-frame PGM heatmaps.
    #[arg(long, conflicts_with = "baseline_color")]
    heatmap_dir: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_HEATMAP_STEM)]
    heatmap_stem: String,
    /// Use the chroma baseline detector keyed on this color, e.g. 0.1,0.75,0.2.
    #[arg(long, value_parser = parse_color)]
    baseline_color: Option<[f64; 3]>,
    #[arg(long, default_value_t = DEFAULT_BASELINE_SIGMA)]
    baseline_sigma: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Scan every n-th frame for the keyframe.
    #[arg(long, default_value_t = KeyframePolicy::default().stride)]
    stride: usize,
    /// Heatmap maximum a scanned frame needs to count as showing a billboard.
    #[arg(long, default_value_t = KeyframePolicy::default().cutoff)]
    cutoff: f64,
    /// Smallest component kept, in pixels; scales with the frame by default.
    #[arg(long)]
    min_area: Option<usize>,
}

impl DetectorArgs {
    fn options(&self) -> Option<DetectorOptions> {
        if let Some(color) = self.baseline_color {
            Some(DetectorOptions::ChromaBaseline { color, sigma: Some(self.baseline_sigma) })
        } else {
            self.heatmap_dir.as_ref().map(|_| DetectorOptions::HeatmapFiles { stem: Some(self.heatmap_stem.clone()) })
        }
    }

    fn config(&self) -> Result<DetectConfig> {
        let source = match (&self.heatmap_dir, self.baseline_color) {
            (Some(dir), _) => DetectorSource::heatmap_files(dir, &self.heatmap_stem),
            (None, Some(color)) => DetectorSource::chroma(color, self.baseline_sigma)?,
            (None, None) => return Err(Error::InvalidConfig("need --heatmap-dir or --baseline-color".into())),
        };
        let policy = KeyframePolicy { stride: self.stride, cutoff: self.cutoff };
        policy.validate()?;
        Ok(DetectConfig { source, policy, threshold: self.threshold, min_area: self.min_area })
    }
}

fn parse_color(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| e.to_string())?;
    <[f64; 3]>::try_from(parts).map_err(|_| "expected R,G,B".to_string())
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    video: VideoArgs,
    #[arg(long)]
    advert: PathBuf,
    /// Confirmed corners; detection runs when omitted.
    #[arg(long)]
    corners: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Output .y4m file.
    #[arg(long, required_unless_present = "out_dir", conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    /// Write PNG frames here instead of a Y4M file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value = "frame_%06d.png")]
    out_pattern: String,
    /// Render report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "poisson")]
    blend: BlendMode,
    #[arg(long, default_value_t = BlendConfig::default().solver_tolerance)]
    solver_tol: f64,
    #[arg(long, default_value_t = BlendConfig::default().max_iterations)]
    solver_max_iters: usize,
    #[command(flatten)]
    klt: KltArgs,
}

#[derive(Args)]
struct KltArgs {
    /// Tracking window half-size.
    #[arg(long, default_value_t = TrackParams::default().window)]
    klt_window: usize,
    #[arg(long, default_value_t = TrackParams::default().pyramid_levels)]
    klt_levels: usize,
    #[arg(long, default_value_t = TrackParams::default().max_iterations)]
    klt_max_iters: usize,
    #[arg(long, default_value_t = TrackParams::default().convergence_epsilon)]
    klt_epsilon: f64,
    #[arg(long, default_value_t = TrackParams::default().min_eigenvalue)]
    klt_min_eigenvalue: f64,
    #[arg(long, default_value_t = TrackParams::default().max_features)]
    klt_max_features: usize,
    #[arg(long, default_value_t = TrackParams::default().feature_quality)]
    klt_quality: f64,
    #[arg(long, default_value_t = TrackParams::default().min_feature_distance)]
    klt_min_distance: f64,
    #[arg(long, default_value_t = TrackParams::default().reprojection_inlier_threshold)]
    klt_inlier_threshold: f64,
}

impl KltArgs {
    fn params(&self) -> TrackParams {
        TrackParams {
            window: self.klt_window,
            pyramid_levels: self.klt_levels,
            max_iterations: self.klt_max_iters,
            convergence_epsilon: self.klt_epsilon,
            min_eigenvalue: self.klt_min_eigenvalue,
            max_features: self.klt_max_features,
            feature_quality: self.klt_quality,
            min_feature_distance: self.klt_min_distance,
            reprojection_inlier_threshold: self.klt_inlier_threshold,
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "ADFORGE_VIDEOS_DIR")]
    videos_dir: PathBuf,
    #[arg(long, env = "ADFORGE_ADVERTS_DIR")]
    adverts_dir: PathBuf,
    #[arg(long, env = "ADFORGE_RESULTS_DIR")]
    results_dir: PathBuf,
    #[arg(long, env = "ADFORGE_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, env = "ADFORGE_RETENTION_SECS", default_value_t = 3600)]
    retention_secs: u64,
    /// Default detector for jobs that name none; heatmap files otherwise.
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Serialize)]
struct GroundTruthFrame {
    frame: usize,
    corners: Quad,
    homography: Homography,
}

fn synth(spec_path: &Path, out_dir: &Path) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let text = std::fs::read_to_string(spec_path).map_err(io(spec_path))?;
    let spec: SceneSpec = serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("scene spec: {e}")))?;
    let scene = generate_synthetic_scene(&spec)?;
    let heat_dir = out_dir.join("heatmaps");
    std::fs::create_dir_all(&heat_dir).map_err(io(&heat_dir))?;
    write_y4m(&out_dir.join("video.y4m"), spec.width, spec.height, FrameRate::default(), &scene.frames)?;
    for (i, h) in scene.heatmaps.iter().enumerate() {
        write_heatmap_pgm(&heatmap_path(&heat_dir, DEFAULT_HEATMAP_STEM, i), h, PgmDepth::Sixteen)?;
    }
    let truth: Vec<GroundTruthFrame> = (0..spec.frame_count)
        .map(|n| GroundTruthFrame { frame: n, corners: scene.quads[n], homography: scene.homographies[n] })
        .collect();
    let gt_path = out_dir.join("ground_truth.json");
    let json = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
    std::fs::write(&gt_path, json).map_err(io(&gt_path))?;
    save_png(&out_dir.join("billboard.png"), &scene.billboard_advert(0)?.image)
}

fn render(a: &RenderArgs) -> Result<()> {
    let corners_override = a.corners.as_deref().map(read_corners_json).transpose()?;
    let no_detector = a.detector.heatmap_dir.is_none() && a.detector.baseline_color.is_none();
    let detect = if corners_override.is_some() && no_detector {
        // Never consulted: the confirmed corners supersede detection.
        DetectConfig::new(DetectorSource::heatmap_files(".", DEFAULT_HEATMAP_STEM))
    } else {
        a.detector.config()?
    };
    let blend = BlendConfig { mode: a.blend, solver_tolerance: a.solver_tol, max_iterations: a.solver_max_iters };
    blend.validate()?;
    let track = a.klt.params();
    track.validate()?;
    let output = match (&a.out, &a.out_dir) {
        (Some(path), _) => OutputTarget::Y4m(path.clone()),
        (None, Some(dir)) => OutputTarget::PngSequence { dir: dir.clone(), pattern: a.out_pattern.clone() },
        (None, None) => unreachable!("clap requires one of --out/--out-dir"),
    };
    let job = JobConfig {
        video: a.video.source(),
        advert: a.advert.clone(),
        detect,
        corners_override,
        render: RenderOptions { blend, track },
        output,
    };
    let report = run_job(&job, |_, _| {})?;
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, json).map_err(|source| Error::Io { path: path.clone(), source })?;
    }
    eprintln!(
        "keyframe {}, {} of {} frames rendered",
        report.keyframe_index,
        report.total_frames_rendered,
        report.frames.len()
    );
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        videos_dir: a.videos_dir.clone(),
        adverts_dir: a.adverts_dir.clone(),
        results_dir: a.results_dir.clone(),
        retention: Duration::from_secs(a.retention_secs),
        default_detector: a.detector.options().unwrap_or(DetectorOptions::HeatmapFiles { stem: None }),
        default_threshold: a.detector.threshold,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|source| Error::Io { path: PathBuf::new(), source })?;
    eprintln!("listening on {}", a.listen);
    rt.block_on(adforge_service::serve(config, a.listen)).map_err(|source| Error::Io { path: a.results_dir.clone(), source })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect { video, detector, out } => {
            let (frame, quad) = detect_keyframe(&video.source(), &detector.config()?)?;
            match out {
                Some(path) => write_corners_json(&path, frame, &quad),
                None => {
                    println!("{}", serde_json::json!({ "frame": frame, "corners": quad }));
                    Ok(())
                }
            }
        }
        Command::Render(args) => render(&args),
        Command::Synth { spec, out_dir } => synth(&spec, &out_dir),
        Command::Serve(args) => serve(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adforge: {e}");
            ExitCode::FAILURE
        }
    }
}
