//! Pyramidal Kanade-Lucas-Tomasi tracking of interior billboard features and
//! per-frame homography refitting that carries the quad forward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Homography, Point, Quad};
use crate::imagecore::{build_pyramid, gradient, to_grayscale, Field, Frame, GrayImage, Pyramid};
use crate::maskops::{rasterize_quad, BinaryMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    /// Half-size of the tracking window (7 gives 15x15).
    pub window: usize,
    pub pyramid_levels: usize,
    /// Per pyramid level.
    pub max_iterations: usize,
    /// Pixels.
    pub convergence_epsilon: f64,
    /// Cutoff on the smaller eigenvalue of the window structure tensor,
    /// averaged per window pixel.
    pub min_eigenvalue: f64,
    pub max_features: usize,
    /// Fraction of the strongest corner response a feature must reach.
    pub feature_quality: f64,
    pub min_feature_distance: f64,
    pub reprojection_inlier_threshold: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            window: 7,
            pyramid_levels: 3,
            max_iterations: 20,
            convergence_epsilon: 0.01,
            min_eigenvalue: 1e-4,
            max_features: 100,
            feature_quality: 0.05,
            min_feature_distance: 8.0,
            reprojection_inlier_threshold: 1.5,
        }
    }
}

impl TrackParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.window > 0
            && self.pyramid_levels >= 1
            && self.max_iterations > 0
            && self.convergence_epsilon > 0.0
            && self.min_eigenvalue > 0.0
            && self.max_features > 0
            && self.min_feature_distance > 0.0
            && self.reprojection_inlier_threshold > 0.0;
        if !positive || !(self.feature_quality > 0.0 && self.feature_quality < 1.0) {
            return Err(Error::InvalidConfig(format!("invalid tracking parameters {self:?}")));
        }
        Ok(())
    }
}

/// Alive features needed for a homography fit with redundancy; fewer
/// triggers re-detection inside the current quad.
pub const MIN_FEATURES: usize = 8;

/// Refit rounds after the initial fit.
const MAX_REFIT_ROUNDS: usize = 5;

/// Mean absolute intensity residual above which a track is dropped.
const MAX_MEAN_RESIDUAL: f64 = 0.1;

/// Half-size of the block summed for the corner response.
const SCORE_BLOCK: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureStatus {
    Alive,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub point: Point,
    pub status: FeatureStatus,
}

/// Outcome of the robust inter-frame fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitStats {
    pub step: Homography,
    pub inliers: usize,
    /// Maximum reprojection error of the inlier set after each fit round.
    pub round_max_errors: Vec<f64>,
    pub redetected: bool,
}

impl FitStats {
    pub fn max_inlier_error(&self) -> f64 {
        self.round_max_errors.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub quad: Quad,
    pub features: Vec<Feature>,
    pub frame_index: usize,
    /// Keyframe image plane to the current frame.
    pub cumulative_homography: Homography,
    pub last_fit: Option<FitStats>,
}

impl TrackState {
    /// Starts tracking at the keyframe, seeding features inside the quad.
    pub fn new(quad: Quad, frame_index: usize, keyframe: &Frame, params: &TrackParams) -> Result<Self> {
        params.validate()?;
        let gray = to_grayscale(keyframe);
        let features = detect_in_quad(&gray, &quad, params)?;
        Ok(Self {
            quad,
            features,
            frame_index,
            cumulative_homography: Homography::identity(),
            last_fit: None,
        })
    }

    pub fn alive(&self) -> usize {
        self.features.iter().filter(|f| f.status == FeatureStatus::Alive).count()
    }
}

fn detect_in_quad(gray: &GrayImage, quad: &Quad, params: &TrackParams) -> Result<Vec<Feature>> {
    let (w, h) = gray.dims();
    let full = rasterize_quad(quad, w, h);
    // Keep windows off the billboard edge where the background moves differently.
    let eroded = full.erode(params.window);
    let roi = if eroded.count() >= MIN_FEATURES { eroded } else { full };
    Ok(good_features(gray, &roi, params)?
        .into_iter()
        .map(|point| Feature { point, status: FeatureStatus::Alive })
        .collect())
}

/// Smaller eigenvalue of `[[a, b], [b, c]]`.
#[inline]
fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let half_tr = (a + c) / 2.0;
    let half_diff = (a - c) / 2.0;
    half_tr - (half_diff * half_diff + b * b).sqrt()
}

/// Shi-Tomasi corner response on a 3x3 block of central-difference gradients.
pub fn corner_scores(gray: &GrayImage) -> Result<Vec<f64>> {
    let (ix, iy) = gradient(gray)?;
    let (w, h) = gray.dims();
    let mut scores = vec![0.0; w * h];
    let r = SCORE_BLOCK as isize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x + dx, y + dy);
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue;
                    }
                    let gx = ix.get(sx as usize, sy as usize);
                    let gy = iy.get(sx as usize, sy as usize);
                    a += gx * gx;
                    b += gx * gy;
                    c += gy * gy;
                }
            }
            scores[y as usize * w + x as usize] = min_eigenvalue(a, b, c).max(0.0);
        }
    }
    Ok(scores)
}

/// Shi-Tomasi feature selection inside `roi`, strongest first.
///
/// Candidates must be local maxima of the response (plateaus resolve to their
/// first pixel in row-major order), reach `feature_quality` of the strongest
/// response in the ROI, and keep a window-sized margin from the image border.
pub fn good_features(gray: &GrayImage, roi: &BinaryMask, p: &TrackParams) -> Result<Vec<Point>> {
    let (w, h) = gray.dims();
    if roi.dims() != (w, h) {
        return Err(Error::DimensionMismatch { expected: (w, h), actual: roi.dims() });
    }
    let scores = corner_scores(gray)?;
    let m = p.window + 1;
    if w <= 2 * m || h <= 2 * m {
        return Err(Error::NoFeatures);
    }
    let in_range = |x: usize, y: usize| x >= m && y >= m && x < w - m && y < h - m && roi.get(x, y);
    let best = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| in_range(x, y))
        .map(|(x, y)| scores[y * w + x])
        .fold(0.0, f64::max);
    if best <= 0.0 {
        return Err(Error::NoFeatures);
    }
    let cutoff = p.feature_quality * best;
    let mut candidates = Vec::new();
    for y in m..h - m {
        for x in m..w - m {
            let s = scores[y * w + x];
            if !roi.get(x, y) || s < cutoff || s <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = scores[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (earlier && n == s) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((s, x, y));
            }
        }
    }
    // Stable sort keeps row-major order among equal scores.
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let min_d2 = p.min_feature_distance * p.min_feature_distance;
    let mut out: Vec<Point> = Vec::new();
    for (_, x, y) in candidates {
        let pt = Point::new(x as f64, y as f64);
        if out.iter().all(|q| {
            let (dx, dy) = (q.x - pt.x, q.y - pt.y);
            dx * dx + dy * dy >= min_d2
        }) {
            out.push(pt);
            if out.len() == p.max_features {
                break;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoFeatures);
    }
    Ok(out)
}

/// A pyramid with per-level gradients of the earlier frame.
#[derive(Debug, Clone)]
pub struct GradientPyramid {
    pub pyramid: Pyramid,
    pub gradients: Vec<(Field, Field)>,
}

impl GradientPyramid {
    pub fn new(pyramid: Pyramid) -> Result<Self> {
        let gradients = pyramid.levels().iter().map(gradient).collect::<Result<Vec<_>>>()?;
        Ok(Self { pyramid, gradients })
    }
}

/// Coarse-to-fine Lucas-Kanade for one point.
pub fn track_point(prev: &Pyramid, next: &Pyramid, p0: Point, params: &TrackParams) -> Result<(Point, FeatureStatus)> {
    let prev = GradientPyramid::new(prev.clone())?;
    Ok(track_point_with_gradients(&prev, next, p0, params))
}

pub fn track_point_with_gradients(prev: &GradientPyramid, next: &Pyramid, p0: Point, params: &TrackParams) -> (Point, FeatureStatus) {
    let levels = prev.pyramid.len().min(next.len()).min(params.pyramid_levels);
    let r = params.window as isize;
    let n_win = ((2 * r + 1) * (2 * r + 1)) as f64;
    let lost = (p0, FeatureStatus::Lost);
    let (w0, h0) = prev.pyramid.level(0).dims();
    if !(p0.x >= 0.0 && p0.y >= 0.0 && p0.x <= (w0 - 1) as f64 && p0.y <= (h0 - 1) as f64) {
        return lost;
    }

    let (mut gx, mut gy) = (0.0f64, 0.0f64);
    for level in (0..levels).rev() {
        let scale = (1u64 << level) as f64;
        let (px, py) = (p0.x / scale, p0.y / scale);
        let img_prev = prev.pyramid.level(level);
        let img_next = next.level(level);
        let (ix, iy) = &prev.gradients[level];
        let (lw, lh) = img_prev.dims();

        let mut tmpl = Vec::with_capacity(n_win as usize);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (sx, sy) = (px + dx as f64, py + dy as f64);
                let gxv = ix.sample(sx, sy);
                let gyv = iy.sample(sx, sy);
                a += gxv * gxv;
                b += gxv * gyv;
                c += gyv * gyv;
                tmpl.push((dx as f64, dy as f64, img_prev.sample(sx, sy), gxv, gyv));
            }
        }
        if min_eigenvalue(a, b, c) / n_win < params.min_eigenvalue {
            return lost;
        }
        let det = a * c - b * b;

        let (mut dx_acc, mut dy_acc) = (0.0f64, 0.0f64);
        for _ in 0..params.max_iterations {
            let (qx, qy) = (px + gx + dx_acc, py + gy + dy_acc);
            if !(qx >= 0.0 && qy >= 0.0 && qx <= (lw - 1) as f64 && qy <= (lh - 1) as f64) {
                return lost;
            }
            let (mut bx, mut by) = (0.0, 0.0);
            for &(ox, oy, iv, gxv, gyv) in &tmpl {
                let diff = iv - img_next.sample(qx + ox, qy + oy);
                bx += gxv * diff;
                by += gyv * diff;
            }
            let ex = (c * bx - b * by) / det;
            let ey = (a * by - b * bx) / det;
            dx_acc += ex;
            dy_acc += ey;
            if ex.hypot(ey) < params.convergence_epsilon {
                break;
            }
        }
        if level > 0 {
            gx = 2.0 * (gx + dx_acc);
            gy = 2.0 * (gy + dy_acc);
        } else {
            gx += dx_acc;
            gy += dy_acc;
        }
    }

    let out = Point::new(p0.x + gx, p0.y + gy);
    let (img_prev, img_next) = (prev.pyramid.level(0), next.level(0));
    if !(out.x >= 0.0 && out.y >= 0.0 && out.x <= (w0 - 1) as f64 && out.y <= (h0 - 1) as f64) {
        return lost;
    }
    let mut residual = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let (ox, oy) = (dx as f64, dy as f64);
            residual += (img_prev.sample(p0.x + ox, p0.y + oy) - img_next.sample(out.x + ox, out.y + oy)).abs();
        }
    }
    if residual / n_win > MAX_MEAN_RESIDUAL {
        return (out, FeatureStatus::Lost);
    }
    (out, FeatureStatus::Alive)
}

/// Least-squares homography with iterative removal of correspondences whose
/// reprojection error exceeds `threshold`.
///
/// Each round keeps the pairs within `max(threshold, worst / 2)` of the
/// current fit, so gross outliers leave first and cannot drag good pairs out
/// with them; a pair dropped early may come back once the fit improves.
pub fn fit_step_homography(src: &[Point], dst: &[Point], threshold: f64) -> Result<(Homography, Vec<bool>, Vec<f64>)> {
    let errors_of = |h: &Homography| -> Vec<f64> {
        src.iter()
            .zip(dst)
            .map(|(a, b)| geometry::project(h, *a).map(|p| p.dist(*b)).unwrap_or(f64::INFINITY))
            .collect()
    };
    let max_over = |errors: &[f64], set: &[bool]| {
        errors.iter().zip(set).filter(|(_, &k)| k).map(|(e, _)| *e).fold(0.0, f64::max)
    };
    let mut inlier = vec![true; src.len()];
    let mut round_max = Vec::new();
    let mut h;
    let mut round = 0;
    loop {
        let (s, d): (Vec<Point>, Vec<Point>) =
            src.iter().zip(dst).zip(&inlier).filter(|(_, &k)| k).map(|((a, b), _)| (*a, *b)).unzip();
        if s.len() < MIN_FEATURES {
            return Err(Error::TrackingLost(format!("{} inliers remain", s.len())));
        }
        h = geometry::fit_homography(&s, &d).map_err(|e| Error::TrackingLost(format!("fit failed: {e}")))?;
        let errors = errors_of(&h);
        let worst = max_over(&errors, &inlier);
        round_max.push(worst);
        if worst <= threshold || round == MAX_REFIT_ROUNDS {
            if worst > threshold {
                // Out of rounds: report only pairs that agree with the last fit.
                for (k, e) in inlier.iter_mut().zip(&errors) {
                    *k = *k && *e <= threshold;
                }
                round_max.push(max_over(&errors, &inlier));
            }
            break;
        }
        let cutoff = threshold.max(worst / 2.0);
        inlier = errors.iter().map(|&e| e <= cutoff).collect();
        round += 1;
    }
    let count = inlier.iter().filter(|&&k| k).count();
    if count < MIN_FEATURES {
        return Err(Error::TrackingLost(format!("{count} inliers remain")));
    }
    Ok((h, inlier, round_max))
}

/// Advances the state by one frame.
pub fn update_quad(prev_frame: &Frame, next_frame: &Frame, state: &TrackState, params: &TrackParams) -> Result<TrackState> {
    let prev_gray = to_grayscale(prev_frame);
    let prev = GradientPyramid::new(build_pyramid(&prev_gray, params.pyramid_levels))?;
    let next = build_pyramid(&to_grayscale(next_frame), params.pyramid_levels);
    update_with_pyramids(&prev_gray, &prev, &next, state, params)
}

/// [`update_quad`] on precomputed pyramids, so a caller walking a sequence can
/// reuse each frame's pyramid once as `next` and once as `prev`.
pub fn update_with_pyramids(
    prev_gray: &GrayImage,
    prev: &GradientPyramid,
    next: &Pyramid,
    state: &TrackState,
    params: &TrackParams,
) -> Result<TrackState> {
    params.validate()?;
    let mut redetected = false;
    let mut seeds: Vec<Point> =
        state.features.iter().filter(|f| f.status == FeatureStatus::Alive).map(|f| f.point).collect();
    if seeds.len() < MIN_FEATURES {
        seeds = match detect_in_quad(prev_gray, &state.quad, params) {
            Ok(f) => f.into_iter().map(|f| f.point).collect(),
            Err(Error::NoFeatures) => Vec::new(),
            Err(e) => return Err(e),
        };
        redetected = true;
        if seeds.len() < MIN_FEATURES {
            return Err(Error::TrackingLost(format!("only {} features inside the quad", seeds.len())));
        }
    }

    let tracked: Vec<(Point, FeatureStatus)> =
        seeds.iter().map(|&p| track_point_with_gradients(prev, next, p, params)).collect();
    let (src, dst): (Vec<Point>, Vec<Point>) = seeds
        .iter()
        .zip(&tracked)
        .filter(|(_, (_, s))| *s == FeatureStatus::Alive)
        .map(|(a, (b, _))| (*a, *b))
        .unzip();
    if src.len() < MIN_FEATURES {
        return Err(Error::TrackingLost(format!("only {} features tracked", src.len())));
    }
    let (step, inlier, round_max_errors) = fit_step_homography(&src, &dst, params.reprojection_inlier_threshold)?;

    let corners = state.quad.corners();
    let mut moved = [Point::default(); 4];
    for (m, c) in moved.iter_mut().zip(corners) {
        *m = geometry::project(&step, *c).map_err(|e| Error::TrackingLost(format!("corner projection: {e}")))?;
    }
    let quad = Quad::new(moved).map_err(|_| Error::TrackingLost("updated quad is not convex".into()))?;
    let cumulative = step
        .compose(&state.cumulative_homography)
        .map_err(|e| Error::TrackingLost(format!("homography composition: {e}")))?;

    let features = dst
        .iter()
        .zip(&inlier)
        .map(|(&point, &ok)| Feature { point, status: if ok { FeatureStatus::Alive } else { FeatureStatus::Lost } })
        .collect();
    let inliers = inlier.iter().filter(|&&k| k).count();
    Ok(TrackState {
        quad,
        features,
        frame_index: state.frame_index + 1,
        cumulative_homography: cumulative,
        last_fit: Some(FitStats { step, inliers, round_max_errors, redetected }),
    })
}
