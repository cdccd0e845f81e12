//! Keyframe detection → tracking → warping → blending → emission.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compositor::{clamp_frame, direct_composite, poisson_blend, warp_onto, Advert, BlendConfig, BlendMode};
use crate::detector::{self, DetectorSource};
use crate::error::{Error, Result};
use crate::geometry::{self, Homography, Point, Quad};
use crate::imagecore::{build_pyramid, sample_plane, to_grayscale, Frame, GrayImage};
use crate::maskops::{default_min_area, localize_quad, rasterize_quad, BinaryMask, Heatmap, DEFAULT_THRESHOLD};
use crate::tracker::{update_with_pyramids, GradientPyramid, TrackParams, TrackState};
use crate::videoio::{self, CornerFile, FrameRate, Y4mWriter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyframePolicy {
    /// Frames between detection attempts.
    pub stride: usize,
    /// Minimum recognition probability.
    pub cutoff: f64,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        Self { stride: 10, cutoff: 0.5 }
    }
}

impl KeyframePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || !(0.0..=1.0).contains(&self.cutoff) {
            return Err(Error::InvalidConfig(format!("invalid keyframe policy {self:?}")));
        }
        Ok(())
    }
}

/// Localization settings shared by detection entry points.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig {
    pub source: DetectorSource,
    pub policy: KeyframePolicy,
    pub threshold: f64,
    /// Defaults to [`default_min_area`] of the frame.
    pub min_area: Option<usize>,
}

impl DetectConfig {
    pub fn new(source: DetectorSource) -> Self {
        Self { source, policy: KeyframePolicy::default(), threshold: DEFAULT_THRESHOLD, min_area: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VideoSource {
    Y4m(PathBuf),
    PngSequence { dir: PathBuf, pattern: String },
}

/// Frame iterator plus what is known about the stream up front.
pub struct OpenVideo {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub frame_rate: FrameRate,
    pub frames: Box<dyn Iterator<Item = Result<Frame>> + Send>,
}

impl VideoSource {
    pub fn open(&self) -> Result<OpenVideo> {
        match self {
            Self::Y4m(path) => {
                let (s, reader) = videoio::read_y4m(path)?;
                Ok(OpenVideo {
                    width: s.width,
                    height: s.height,
                    frame_count: s.frame_count,
                    frame_rate: s.frame_rate,
                    frames: Box::new(reader),
                })
            }
            Self::PngSequence { dir, pattern } => {
                let files = videoio::list_sequence(dir, pattern)?;
                let (width, height) = match files.first() {
                    Some((_, p)) => videoio::load_png(p)?.dims(),
                    None => (0, 0),
                };
                let frame_count = files.len();
                let frames = files.into_iter().map(move |(_, p)| {
                    let f = videoio::load_png(&p)?;
                    if f.dims() != (width, height) {
                        return Err(Error::DimensionMismatch { expected: (width, height), actual: f.dims() });
                    }
                    Ok(f)
                });
                Ok(OpenVideo { width, height, frame_count, frame_rate: FrameRate::default(), frames: Box::new(frames) })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputTarget {
    Y4m(PathBuf),
    PngSequence { dir: PathBuf, pattern: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub blend: BlendConfig,
    pub track: TrackParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub video: VideoSource,
    pub advert: PathBuf,
    pub detect: DetectConfig,
    /// Supersedes detection when present.
    pub corners_override: Option<CornerFile>,
    pub render: RenderOptions,
    pub output: OutputTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameStatus {
    Passthrough,
    Rendered,
    LostPassthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_index: usize,
    pub status: FrameStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub corners: Option<Quad>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alive_features: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_inlier_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub blend_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub blend_converged: Option<bool>,
}

impl FrameReport {
    fn passthrough(frame_index: usize, status: FrameStatus) -> Self {
        Self {
            frame_index,
            status,
            corners: None,
            alive_features: None,
            max_inlier_error: None,
            blend_residual: None,
            blend_converged: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    TrackingLost { frame_index: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    pub keyframe_index: usize,
    pub frames: Vec<FrameReport>,
    pub total_frames_rendered: usize,
    pub termination: Termination,
}

/// Scans `frames` at the policy stride for the first confident detection.
pub fn detect_keyframe_in(frames: impl Iterator<Item = Result<Frame>>, cfg: &DetectConfig) -> Result<(usize, Quad)> {
    cfg.policy.validate()?;
    for (i, frame) in frames.enumerate() {
        if i % cfg.policy.stride != 0 {
            continue;
        }
        let frame = frame?;
        // recognize() is the heatmap maximum; localize once and reuse it.
        let heat = detector::localize(&cfg.source, i, &frame)?;
        if heat.max() >= cfg.policy.cutoff {
            let min_area = cfg.min_area.unwrap_or_else(|| default_min_area(frame.width(), frame.height()));
            return Ok((i, localize_quad(&heat, cfg.threshold, min_area)?));
        }
    }
    Err(Error::NoBillboardFound)
}

pub fn detect_keyframe(video: &VideoSource, cfg: &DetectConfig) -> Result<(usize, Quad)> {
    let open = video.open()?;
    if open.frame_count == 0 {
        return Err(Error::InvalidImage("video has no frames".into()));
    }
    detect_keyframe_in(open.frames, cfg)
}

/// Homography taking the advert's placed region onto `quad`.
pub fn keyframe_homography(advert: &Advert, quad: &Quad) -> Result<Homography> {
    geometry::estimate_homography(advert.source_quad.corners(), quad.corners())
}

/// Rasterized quad minus the frame's outermost pixels, so the Poisson
/// boundary always exists.
fn compositing_region(quad: &Quad, width: usize, height: usize) -> BinaryMask {
    let mut omega = rasterize_quad(quad, width, height);
    for x in 0..width {
        omega.set(x, 0, false);
        omega.set(x, height - 1, false);
    }
    for y in 0..height {
        omega.set(0, y, false);
        omega.set(width - 1, y, false);
    }
    omega
}

/// Inserts the advert into one frame over the rasterized `quad`.
pub fn composite_frame(frame: &Frame, advert: &Advert, h: &Homography, quad: &Quad, blend: &BlendConfig) -> Result<(Frame, Option<f64>, Option<bool>)> {
    let omega = compositing_region(quad, frame.width(), frame.height());
    let warped = warp_onto(advert, h, &omega)?;
    match blend.mode {
        BlendMode::Direct => Ok((direct_composite(frame, &warped, &omega)?, None, None)),
        BlendMode::Poisson => {
            let res = poisson_blend(frame, &warped, &omega, blend)?;
            Ok((clamp_frame(&res.image), Some(res.relative_residual), Some(res.converged)))
        }
    }
}

struct Tracking {
    state: TrackState,
    gray: GrayImage,
    pyramid: GradientPyramid,
}

/// Streams `frames` through the tracker and compositor, handing every output
/// frame to `emit` in order. `progress` receives the number emitted so far.
#[allow(clippy::too_many_arguments)]
pub fn render_frames(
    frames: impl Iterator<Item = Result<Frame>>,
    advert: &Advert,
    keyframe: usize,
    quad: Quad,
    opts: &RenderOptions,
    mut emit: impl FnMut(usize, &Frame) -> Result<()>,
    mut progress: impl FnMut(usize),
) -> Result<RenderReport> {
    opts.blend.validate()?;
    opts.track.validate()?;
    let h0 = keyframe_homography(advert, &quad)?;
    let mut reports = Vec::new();
    let mut tracking: Option<Tracking> = None;
    let mut termination = Termination::Completed;
    let mut lost = false;
    let mut rendered = 0;

    for (i, frame) in frames.enumerate() {
        let frame = frame?;
        if i < keyframe || lost {
            let status = if lost { FrameStatus::LostPassthrough } else { FrameStatus::Passthrough };
            emit(i, &frame)?;
            reports.push(FrameReport::passthrough(i, status));
            progress(i + 1);
            continue;
        }
        let gray = to_grayscale(&frame);
        let pyramid = build_pyramid(&gray, opts.track.pyramid_levels);
        let step = match tracking.take() {
            None => TrackState::new(quad, i, &frame, &opts.track),
            Some(t) => update_with_pyramids(&t.gray, &t.pyramid, &pyramid, &t.state, &opts.track),
        };
        let state = match step {
            Ok(s) => s,
            Err(e @ (Error::TrackingLost(_) | Error::NoFeatures)) => {
                lost = true;
                termination = Termination::TrackingLost { frame_index: i, detail: e.to_string() };
                emit(i, &frame)?;
                reports.push(FrameReport::passthrough(i, FrameStatus::LostPassthrough));
                progress(i + 1);
                continue;
            }
            Err(e) => return Err(e),
        };
        let h = state.cumulative_homography.compose(&h0)?;
        let (out, residual, converged) = match composite_frame(&frame, advert, &h, &state.quad, &opts.blend) {
            Ok(r) => r,
            Err(Error::EmptyOmega) => {
                lost = true;
                termination = Termination::TrackingLost { frame_index: i, detail: "billboard left the frame".into() };
                emit(i, &frame)?;
                reports.push(FrameReport::passthrough(i, FrameStatus::LostPassthrough));
                progress(i + 1);
                continue;
            }
            Err(e) => return Err(e),
        };
        emit(i, &out)?;
        rendered += 1;
        reports.push(FrameReport {
            frame_index: i,
            status: FrameStatus::Rendered,
            corners: Some(state.quad),
            alive_features: Some(state.alive()),
            max_inlier_error: Some(state.last_fit.as_ref().map_or(0.0, |f| f.max_inlier_error())),
            blend_residual: residual,
            blend_converged: converged,
        });
        progress(i + 1);
        let pyramid = GradientPyramid::new(pyramid)?;
        tracking = Some(Tracking { state, gray, pyramid });
    }
    if keyframe >= reports.len() {
        return Err(Error::InvalidConfig(format!("keyframe {keyframe} beyond the last frame")));
    }
    Ok(RenderReport { keyframe_index: keyframe, frames: reports, total_frames_rendered: rendered, termination })
}

/// Full job: detection (unless overridden), then rendering into the output
/// target. `progress` receives `(emitted, total)`.
pub fn run_job(cfg: &JobConfig, mut progress: impl FnMut(usize, usize)) -> Result<RenderReport> {
    let (keyframe, quad) = match &cfg.corners_override {
        Some(c) => (c.frame, c.corners),
        None => detect_keyframe(&cfg.video, &cfg.detect)?,
    };
    let advert = Advert::new(videoio::load_png(&cfg.advert)?)?;
    let open = cfg.video.open()?;
    let total = open.frame_count;
    match &cfg.output {
        OutputTarget::Y4m(path) => {
            let mut w = Y4mWriter::create(path, open.width, open.height, open.frame_rate)?;
            let report = render_frames(open.frames, &advert, keyframe, quad, &cfg.render, |_, f| w.write_frame(f), |n| progress(n, total))?;
            w.finish()?;
            Ok(report)
        }
        OutputTarget::PngSequence { dir, pattern } => {
            let pat = videoio::SequencePattern::parse(pattern)?;
            std::fs::create_dir_all(dir).map_err(crate::error::io_err(dir))?;
            render_frames(
                open.frames,
                &advert,
                keyframe,
                quad,
                &cfg.render,
                |i, f| videoio::save_png(&dir.join(pat.format(i)), f),
                |n| progress(n, total),
            )
        }
    }
}

/// Camera motion of the synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    /// Per-frame translation plus a projective tilt growing linearly with the
    /// frame index, both about the keyframe quad's centroid.
    Drift { translation: [f64; 2], perspective: [f64; 2] },
    /// Frame-0-to-frame-n homographies, one per frame.
    Homographies(Vec<Homography>),
}

impl Default for Motion {
    fn default() -> Self {
        Self::Drift { translation: [0.0; 2], perspective: [0.0; 2] }
    }
}

fn default_margin() -> f64 {
    8.0
}

fn default_billboard_color() -> [f64; 3] {
    [0.1, 0.75, 0.2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Billboard corners in frame 0.
    pub quad: Quad,
    #[serde(default)]
    pub motion: Motion,
    /// Distance the billboard keeps from the frame edge, in pixels.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Mean billboard color; the chroma baseline should look for this.
    #[serde(default = "default_billboard_color")]
    pub billboard_color: [f64; 3],
}

pub struct SyntheticScene {
    pub frames: Vec<Frame>,
    pub quads: Vec<Quad>,
    pub heatmaps: Vec<Heatmap>,
    pub homographies: Vec<Homography>,
    /// The plane every frame is resampled from, and the frame-0 coordinates
    /// of its top-left pixel.
    pub canvas: Frame,
    pub canvas_origin: (i64, i64),
    /// Billboard corners on the scene plane.
    pub plane_quad: Quad,
}

/// Smoothstep-interpolated random lattice.
struct ValueNoise {
    lattice: Vec<f64>,
    cols: usize,
    cell: f64,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: usize) -> Self {
        let cols = width / cell + 2;
        let rows = height / cell + 2;
        Self { lattice: (0..cols * rows).map(|_| rng.random()).collect(), cols, cell: cell as f64 }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let (fx, fy) = (x as f64 / self.cell, y as f64 / self.cell);
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
        let g = |a: usize, b: usize| self.lattice[b * self.cols + a];
        let top = g(i, j) * (1.0 - sx) + g(i + 1, j) * sx;
        let bot = g(i, j + 1) * (1.0 - sx) + g(i + 1, j + 1) * sx;
        top * (1.0 - sy) + bot * sy
    }
}

const BILLBOARD_TEXTURE_AMPLITUDE: f64 = 0.1;
const BACKGROUND_BASE: [f64; 3] = [0.6, 0.4, 0.45];
const BACKGROUND_AMPLITUDE: f64 = 0.15;
const MAX_CANVAS_SCALE: f64 = 8.0;

pub fn scene_homographies(spec: &SceneSpec) -> Result<Vec<Homography>> {
    match &spec.motion {
        Motion::Homographies(hs) => {
            if hs.len() != spec.frame_count {
                return Err(Error::InvalidConfig(format!("{} homographies for {} frames", hs.len(), spec.frame_count)));
            }
            hs.iter().map(|h| Homography::new(h.matrix())).collect()
        }
        Motion::Drift { translation: [tx, ty], perspective: [px, py] } => {
            let c = spec.quad.centroid();
            let to_origin = Homography::translation(-c.x, -c.y);
            (0..spec.frame_count)
                .map(|n| {
                    let n = n as f64;
                    let tilt = Homography::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [n * px, n * py, 1.0]])?;
                    let back = Homography::translation(c.x + n * tx, c.y + n * ty);
                    back.compose(&tilt.compose(&to_origin)?)
                })
                .collect()
        }
    }
}

/// Renders a planar scene (textured background with a distinct textured
/// billboard) under per-frame camera motion, with exact ground truth.
pub fn generate_synthetic_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let (w, h) = (spec.width, spec.height);
    if w < 2 || h < 2 || spec.frame_count == 0 {
        return Err(Error::InvalidConfig(format!("scene {w}x{h} with {} frames", spec.frame_count)));
    }
    let homographies = scene_homographies(spec)?;
    let mut quads = Vec::with_capacity(spec.frame_count);
    let mut inverses = Vec::with_capacity(spec.frame_count);
    let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, (w - 1) as f64, (h - 1) as f64);
    let m = spec.margin;
    for (n, hn) in homographies.iter().enumerate() {
        let mut c = [Point::default(); 4];
        for (d, s) in c.iter_mut().zip(spec.quad.corners()) {
            *d = geometry::project(hn, *s).map_err(|_| Error::QuadOutOfBounds(n))?;
        }
        let inside = c.iter().all(|p| p.x >= m && p.y >= m && p.x <= (w - 1) as f64 - m && p.y <= (h - 1) as f64 - m);
        if !inside {
            return Err(Error::QuadOutOfBounds(n));
        }
        quads.push(Quad::new(c).map_err(|_| Error::QuadOutOfBounds(n))?);
        let inv = hn.inverse()?;
        for corner in [(0.0, 0.0), ((w - 1) as f64, 0.0), ((w - 1) as f64, (h - 1) as f64), (0.0, (h - 1) as f64)] {
            let p = geometry::project(&inv, Point::new(corner.0, corner.1))?;
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        inverses.push(inv);
    }
    let (ox, oy) = (x0.floor() as i64 - 2, y0.floor() as i64 - 2);
    let (cw, ch) = ((x1.ceil() as i64 + 3 - ox) as usize, (y1.ceil() as i64 + 3 - oy) as usize);
    if cw as f64 > MAX_CANVAS_SCALE * w as f64 || ch as f64 > MAX_CANVAS_SCALE * h as f64 {
        return Err(Error::InvalidConfig("camera motion sweeps too large a scene".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let billboard = ValueNoise::new(&mut rng, cw, ch, 4);
    let background: Vec<ValueNoise> = (0..3).map(|_| ValueNoise::new(&mut rng, cw, ch, 12)).collect();
    let canvas = Frame::from_fn(cw, ch, |u, v| {
        let p = Point::new((u as i64 + ox) as f64, (v as i64 + oy) as f64);
        if spec.quad.contains(p, 1e-9) {
            let t = BILLBOARD_TEXTURE_AMPLITUDE * (2.0 * billboard.at(u, v) - 1.0);
            spec.billboard_color.map(|c| c + t)
        } else {
            std::array::from_fn(|c| BACKGROUND_BASE[c] + BACKGROUND_AMPLITUDE * (2.0 * background[c].at(u, v) - 1.0))
        }
    });

    let planes: Vec<Vec<f64>> = (0..3).map(|c| canvas.channel(c).data().to_vec()).collect();
    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut heatmaps = Vec::with_capacity(spec.frame_count);
    for (inv, quad) in inverses.iter().zip(&quads) {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let p = geometry::project(inv, Point::new(x as f64, y as f64))?;
                let (u, v) = (p.x - ox as f64, p.y - oy as f64);
                for plane in &planes {
                    data.push(sample_plane(plane, cw, ch, u, v));
                }
            }
        }
        frames.push(Frame::new(w, h, data)?);
        heatmaps.push(Heatmap::from_mask(&rasterize_quad(quad, w, h), 0.95, 0.05));
    }
    Ok(SyntheticScene { frames, quads, heatmaps, homographies, canvas, canvas_origin: (ox, oy), plane_quad: spec.quad })
}

impl SyntheticScene {
    /// The billboard as it appears on the scene plane, with `margin` pixels of
    /// surrounding content; its placed quad is the frame-0 billboard quad.
    pub fn billboard_advert(&self, margin: usize) -> Result<Advert> {
        let quad0 = self.plane_quad;
        let (bx0, by0, bx1, by1) = quad0.bounds();
        let (ox, oy) = self.canvas_origin;
        let left = (bx0.floor() as i64 - margin as i64 - ox).max(0) as usize;
        let top = (by0.floor() as i64 - margin as i64 - oy).max(0) as usize;
        let right = ((bx1.ceil() as i64 + margin as i64 - ox) as usize).min(self.canvas.width() - 1);
        let bottom = ((by1.ceil() as i64 + margin as i64 - oy) as usize).min(self.canvas.height() - 1);
        let crop = Frame::from_fn(right - left + 1, bottom - top + 1, |x, y| self.canvas.pixel(x + left, y + top));
        let shift = Point::new((left as i64 + ox) as f64, (top as i64 + oy) as f64);
        let mut c = [Point::default(); 4];
        for (d, s) in c.iter_mut().zip(quad0.corners()) {
            *d = *s - shift;
        }
        Advert::with_quad(crop, Quad::new(c)?)
    }
}
