//! Advert warping and gradient-domain (Poisson) compositing.
//!
//! The blend solves, per channel and over the region Ω with 4-neighborhoods,
//!
//! ```text
//! |N_p| f_p - Σ_{q ∈ N_p ∩ Ω} f_q = Σ_{q ∈ N_p ∩ ∂Ω} target_q + Σ_{q ∈ N_p} (source_p - source_q)
//! ```
//!
//! so the inserted content keeps the advert's gradients while taking its
//! boundary values, and with them the local illumination and tone, from the
//! frame it is inserted into.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Homography, Point, Quad};
use crate::imagecore::{sample_plane, Frame};
use crate::maskops::{rasterize_quad, BinaryMask};

/// Replacement creative. `source_quad` is the part mapped onto the billboard,
/// normally the full pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Advert {
    pub image: Frame,
    pub source_quad: Quad,
}

impl Advert {
    pub fn new(image: Frame) -> Result<Self> {
        let (w, h) = image.dims();
        if w < 2 || h < 2 {
            return Err(Error::TooSmall { width: w, height: h, min: 2 });
        }
        let source_quad = Quad::rect(0.0, 0.0, (w - 1) as f64, (h - 1) as f64)?;
        Ok(Self { image, source_quad })
    }

    /// Advert whose placed region is `source_quad`; image content around it
    /// is used as blend guidance on the ring just outside the placed region.
    pub fn with_quad(image: Frame, source_quad: Quad) -> Result<Self> {
        let (w, h) = image.dims();
        let inside = source_quad
            .corners()
            .iter()
            .all(|c| c.x >= 0.0 && c.y >= 0.0 && c.x <= (w - 1) as f64 && c.y <= (h - 1) as f64);
        if !inside {
            return Err(Error::InvalidConfig("advert quad exceeds the advert image".into()));
        }
        Ok(Self { image, source_quad })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    #[default]
    Poisson,
    Direct,
}

impl std::str::FromStr for BlendMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(Self::Poisson),
            "direct" => Ok(Self::Direct),
            other => Err(Error::InvalidConfig(format!("unknown blend mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendConfig {
    pub mode: BlendMode,
    /// Relative residual `|Af - b| / |b|` at which CG stops.
    pub solver_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self { mode: BlendMode::Poisson, solver_tolerance: 1e-6, max_iterations: 10_000 }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.solver_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig(format!("invalid blend config {self:?}")));
        }
        Ok(())
    }
}

/// RGB values that may leave `[0, 1]`, as produced by the Poisson solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl From<&Frame> for RgbBuffer {
    fn from(f: &Frame) -> Self {
        Self { width: f.width(), height: f.height(), data: f.data().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendResult {
    pub image: RgbBuffer,
    /// Worst relative residual over the three channel solves.
    pub relative_residual: f64,
    /// Largest CG iteration count over the channels.
    pub iterations: usize,
    /// False when the iteration cap was hit with the residual above ten times
    /// the tolerance; the image is still the last iterate.
    pub converged: bool,
}

/// Inverse-maps every pixel of the destination quad into the advert.
pub fn warp_advert(ad: &Advert, h: &Homography, width: usize, height: usize) -> Result<(Frame, BinaryMask)> {
    let mut dst = [Point::default(); 4];
    for (d, c) in dst.iter_mut().zip(ad.source_quad.corners()) {
        *d = geometry::project(h, *c)?;
    }
    let dst_quad = Quad::new(dst)?;
    let omega = rasterize_quad(&dst_quad, width, height);
    let warped = warp_onto(ad, h, &omega)?;
    Ok((warped, omega))
}

/// [`warp_advert`] over a caller-chosen region `omega`.
pub fn warp_onto(ad: &Advert, h: &Homography, omega: &BinaryMask) -> Result<Frame> {
    if omega.is_empty() {
        return Err(Error::EmptyOmega);
    }
    let (width, height) = omega.dims();
    let inv = h.inverse()?;
    let (aw, ah) = ad.image.dims();
    let planes: Vec<Vec<f64>> = (0..3).map(|c| ad.image.channel(c).data().to_vec()).collect();
    // Ω plus its 4-neighbor ring: the blend's guidance field reads the
    // source across ∂Ω, so it must be the advert there too, not black.
    let ring = BinaryMask::from_fn(width, height, |x, y| {
        omega.get(x, y)
            || (x > 0 && omega.get(x - 1, y))
            || (x + 1 < width && omega.get(x + 1, y))
            || (y > 0 && omega.get(x, y - 1))
            || (y + 1 < height && omega.get(x, y + 1))
    });
    let mut data = vec![0.0; width * height * 3];
    for (x, y) in ring.iter_set() {
        let s = match geometry::project(&inv, Point::new(x as f64, y as f64)) {
            Ok(s) => s,
            Err(_) if !omega.get(x, y) => continue,
            Err(e) => return Err(e),
        };
        let i = (y * width + x) * 3;
        for c in 0..3 {
            data[i + c] = sample_plane(&planes[c], aw, ah, s.x, s.y);
        }
    }
    Ok(Frame::from_raw(width, height, data))
}

/// Pixel-select composite without blending.
pub fn direct_composite(target: &Frame, source: &Frame, omega: &BinaryMask) -> Result<Frame> {
    if target.dims() != source.dims() || target.dims() != omega.dims() {
        return Err(Error::DimensionMismatch { expected: target.dims(), actual: source.dims() });
    }
    let mut out = target.clone();
    let data = out.data_mut();
    for (x, y) in omega.iter_set() {
        let i = (y * target.width() + x) * 3;
        data[i..i + 3].copy_from_slice(&source.data()[i..i + 3]);
    }
    Ok(out)
}

pub fn clamp_frame(f: &RgbBuffer) -> Frame {
    Frame::from_raw(f.width, f.height, f.data.iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Discrete Poisson system over Ω in compressed neighbor form.
struct PoissonSystem {
    /// Row-major pixel index of each unknown.
    pixels: Vec<usize>,
    /// Unknown index of each 4-neighbor, or `None` when it lies on ∂Ω.
    neighbors: Vec<[Option<usize>; 4]>,
}

impl PoissonSystem {
    fn new(omega: &BinaryMask) -> Self {
        let w = omega.width();
        let mut index = vec![usize::MAX; omega.data().len()];
        let mut pixels = Vec::new();
        for (i, &set) in omega.data().iter().enumerate() {
            if set {
                index[i] = pixels.len();
                pixels.push(i);
            }
        }
        let neighbors = pixels
            .iter()
            .map(|&i| {
                [i - 1, i + 1, i - w, i + w].map(|j| if index[j] != usize::MAX { Some(index[j]) } else { None })
            })
            .collect();
        Self { pixels, neighbors }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (k, nb) in self.neighbors.iter().enumerate() {
            let mut v = 4.0 * x[k];
            for j in nb.iter().flatten() {
                v -= x[*j];
            }
            out[k] = v;
        }
    }
}

fn neighbor_pixels(i: usize, w: usize) -> [usize; 4] {
    [i - 1, i + 1, i - w, i + w]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unpreconditioned conjugate gradient; returns iterations and the final
/// relative residual.
fn conjugate_gradient(sys: &PoissonSystem, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> (usize, f64) {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut r = vec![0.0; n];
    sys.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol * scale {
        return (0, rr.sqrt() / scale);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        sys.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (it, rr.sqrt() / scale);
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * scale {
            // Confirm against the true residual; the recursive one drifts.
            let true_rel = true_residual(sys, b, x) / scale;
            if true_rel <= tol {
                return (it, true_rel);
            }
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    (max_iter, true_residual(sys, b, x) / scale)
}

fn true_residual(sys: &PoissonSystem, b: &[f64], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    sys.apply(x, &mut ax);
    ax.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

/// Seamless cloning of `source` into `target` over `omega`.
pub fn poisson_blend(target: &Frame, source: &Frame, omega: &BinaryMask, cfg: &BlendConfig) -> Result<BlendResult> {
    cfg.validate()?;
    if target.dims() != source.dims() || target.dims() != omega.dims() {
        return Err(Error::DimensionMismatch { expected: target.dims(), actual: source.dims() });
    }
    if omega.is_empty() {
        return Err(Error::EmptyOmega);
    }
    if omega.touches_border() {
        return Err(Error::OmegaTouchesBorder);
    }
    let w = target.width();
    let sys = PoissonSystem::new(omega);
    let n = sys.pixels.len();
    let mut out = RgbBuffer::from(target);
    let mut worst_residual: f64 = 0.0;
    let mut max_iters = 0;
    let mut converged = true;
    for c in 0..3 {
        let t = |i: usize| target.data()[i * 3 + c];
        let s = |i: usize| source.data()[i * 3 + c];
        let mut b = vec![0.0; n];
        for (k, (&pix, nb)) in sys.pixels.iter().zip(&sys.neighbors).enumerate() {
            let mut v = 0.0;
            for (q, slot) in neighbor_pixels(pix, w).into_iter().zip(nb) {
                if slot.is_none() {
                    v += t(q);
                }
                v += s(pix) - s(q);
            }
            b[k] = v;
        }
        // Warm start from the target itself; exact when source == target.
        let mut x: Vec<f64> = sys.pixels.iter().map(|&i| t(i)).collect();
        let (iters, rel) = conjugate_gradient(&sys, &b, &mut x, cfg.solver_tolerance, cfg.max_iterations);
        if iters >= cfg.max_iterations && rel > 10.0 * cfg.solver_tolerance {
            converged = false;
        }
        worst_residual = worst_residual.max(rel);
        max_iters = max_iters.max(iters);
        for (&pix, v) in sys.pixels.iter().zip(&x) {
            out.data[pix * 3 + c] = *v;
        }
    }
    Ok(BlendResult { image: out, relative_residual: worst_residual, iterations: max_iters, converged })
}
