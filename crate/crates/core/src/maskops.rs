//! Heatmap post-processing: threshold, 8-connected regions, Moore boundaries,
//! and the heatmap-to-quad localization chain.

use crate::error::{Error, Result};
use crate::geometry::{self, Point, Quad};

/// Per-pixel billboard probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "heatmap {width}x{height} with {} samples",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    /// `inside` where the mask is set, `outside` elsewhere.
    pub fn from_mask(mask: &BinaryMask, inside: f64, outside: f64) -> Self {
        Self::from_fn(mask.width, mask.height, |x, y| if mask.get(x, y) { inside } else { outside })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidImage(format!("mask {width}x{height} with {} samples", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Coordinates of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Erosion by a `(2r+1)`-square; pixels outside the frame count as unset.
    pub fn erode(&self, r: usize) -> BinaryMask {
        let (w, h) = self.dims();
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                horiz[y * w + x] = x >= r && x + r < w && (x - r..=x + r).all(|xx| self.get(xx, y));
            }
        }
        BinaryMask::from_fn(w, h, |x, y| y >= r && y + r < h && (y - r..=y + r).all(|yy| horiz[yy * w + x]))
    }

    /// True when any set pixel's 4-neighbor would fall outside the frame.
    pub fn touches_border(&self) -> bool {
        let (w, h) = self.dims();
        (0..w).any(|x| self.get(x, 0) || self.get(x, h - 1)) || (0..h).any(|y| self.get(0, y) || self.get(w - 1, y))
    }
}

/// A filled 8-connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: usize,
    pub area: usize,
    /// Member pixels in row-major order.
    pub pixels: Vec<(usize, usize)>,
    /// Outer contour, traced clockwise on screen from the first member pixel.
    pub boundary: Vec<(usize, usize)>,
}

/// Pixel set iff `h >= t`.
pub fn threshold(h: &Heatmap, t: f64) -> BinaryMask {
    BinaryMask { width: h.width, height: h.height, data: h.data.iter().map(|&v| v >= t).collect() }
}

const NEIGHBORS8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Clockwise on screen, starting west.
const MOORE: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

/// 8-connected labeling; labels follow the row-major order of each region's
/// first pixel.
pub fn connected_components(m: &BinaryMask) -> Vec<Region> {
    let (w, h) = m.dims();
    let mut labels = vec![usize::MAX; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !m.data[start] || labels[start] != usize::MAX {
            continue;
        }
        let label = regions.len();
        labels[start] = label;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            pixels.push(i);
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if m.data[j] && labels[j] == usize::MAX {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        pixels.sort_unstable();
        let s = (start % w, start / w);
        regions.push(Region {
            label,
            area: pixels.len(),
            pixels: pixels.into_iter().map(|i| (i % w, i / w)).collect(),
            boundary: trace_boundary(m, s),
        });
    }
    regions
}

/// Moore-neighbor tracing from the region's first row-major pixel, whose
/// west neighbor is background by construction.
fn trace_boundary(m: &BinaryMask, start: (usize, usize)) -> Vec<(usize, usize)> {
    let (w, h) = m.dims();
    let fg = |x: isize, y: isize| x >= 0 && y >= 0 && x < w as isize && y < h as isize && m.get(x as usize, y as usize);
    let s = (start.0 as isize, start.1 as isize);

    // Returns the next boundary pixel and the direction index of the
    // background neighbor examined just before it.
    let step = |c: (isize, isize), from_dir: usize| -> Option<((isize, isize), usize)> {
        for k in 1..=8 {
            let d = (from_dir + k) % 8;
            let (dx, dy) = MOORE[d];
            let n = (c.0 + dx, c.1 + dy);
            if fg(n.0, n.1) {
                let prev = (d + 7) % 8;
                // Express the backtrack pixel as a direction seen from n.
                let (bx, by) = (c.0 + MOORE[prev].0 - n.0, c.1 + MOORE[prev].1 - n.1);
                let back = MOORE.iter().position(|&v| v == (bx, by)).unwrap_or(0);
                return Some((n, back));
            }
        }
        None
    };

    let Some(first_move) = step(s, 0) else {
        return vec![start];
    };
    let mut out = vec![start];
    let (mut cur, mut back) = first_move;
    // The walk is deterministic in (pixel, backtrack), so it is closed once
    // leaving the start would reproduce the first move.
    for _ in 0..4 * w * h + 8 {
        if cur == s && step(s, back) == Some(first_move) {
            break;
        }
        out.push((cur.0 as usize, cur.1 as usize));
        match step(cur, back) {
            Some(next) => (cur, back) = next,
            None => break,
        }
    }
    out
}

/// Largest region; ties go to the one whose first row-major pixel comes first.
pub fn largest_region(regions: &[Region]) -> Result<&Region> {
    regions
        .iter()
        .min_by(|a, b| b.area.cmp(&a.area).then_with(|| row_major_key(a).cmp(&row_major_key(b))))
        .ok_or(Error::NoRegion)
}

fn row_major_key(r: &Region) -> (usize, usize) {
    r.pixels.first().map(|&(x, y)| (y, x)).unwrap_or((usize::MAX, usize::MAX))
}

/// Default threshold on heatmap probabilities.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// 0.1% of the frame, at least one pixel.
pub fn default_min_area(width: usize, height: usize) -> usize {
    (width * height).div_ceil(1000).max(1)
}

/// Threshold, label, keep the largest region, and circumscribe the
/// minimum-area rectangle around the hull of its boundary.
pub fn localize_quad(h: &Heatmap, t: f64, min_area: usize) -> Result<Quad> {
    let mask = threshold(h, t);
    let regions = connected_components(&mask);
    let region = largest_region(&regions)?;
    if region.area < min_area {
        return Err(Error::RegionTooSmall { area: region.area, min_area });
    }
    let pts: Vec<Point> = region.boundary.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect();
    let (quad, _) = geometry::min_area_rect(&pts)?;
    Ok(quad)
}

const RASTER_EPS: f64 = 1e-9;

/// Scanline fill: a pixel is set when its center lies inside the quad or on
/// its boundary. Pixel centers sit at integer coordinates.
pub fn rasterize_quad(q: &Quad, width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::empty(width, height);
    let c = q.corners();
    let (_, y0, _, y1) = q.bounds();
    let ys = (y0 - RASTER_EPS).ceil().max(0.0) as usize;
    let ye = (y1 + RASTER_EPS).floor();
    if ye < 0.0 {
        return m;
    }
    let ye = (ye as usize).min(height - 1);
    for y in ys..=ye {
        let yf = y as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..4 {
            let a = c[i];
            let b = c[(i + 1) % 4];
            let (ymin, ymax) = (a.y.min(b.y), a.y.max(b.y));
            if yf < ymin - RASTER_EPS || yf > ymax + RASTER_EPS {
                continue;
            }
            if (b.y - a.y).abs() <= RASTER_EPS {
                lo = lo.min(a.x.min(b.x));
                hi = hi.max(a.x.max(b.x));
            } else {
                let t = ((yf - a.y) / (b.y - a.y)).clamp(0.0, 1.0);
                let x = a.x + t * (b.x - a.x);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo > hi {
            continue;
        }
        let xs = (lo - RASTER_EPS).ceil().max(0.0);
        let xe = (hi + RASTER_EPS).floor();
        if xe < 0.0 || xs > (width - 1) as f64 {
            continue;
        }
        for x in xs as usize..=(xe as usize).min(width - 1) {
            m.set(x, y, true);
        }
    }
    m
}
