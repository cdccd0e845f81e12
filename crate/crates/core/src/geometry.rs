//! Points, quads, homographies, convex hulls and minimum-area rectangles.
//!
//! Coordinates are image coordinates: `x` grows to the right, `y` grows
//! downward. A [`Quad`] always lists its corners clockwise as seen on screen
//! (TL, TR, BR, BL), which is a positive cross product of consecutive edges
//! in raw coordinates.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

/// z-component of `(a - o) x (b - o)`.
#[inline]
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Four corners, TL, TR, BR, BL, convex and clockwise in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Quad {
    corners: [Point; 4],
}

impl Quad {
    /// Validates convexity and winding; the corner order is kept as given.
    pub fn new(corners: [Point; 4]) -> Result<Self> {
        if corners.iter().any(|p| !p.is_finite()) {
            return Err(Error::NotConvex);
        }
        for i in 0..4 {
            if cross(corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]) <= 0.0 {
                return Err(Error::NotConvex);
            }
        }
        Ok(Self { corners })
    }

    /// Axis-aligned rectangle with corners at `(x0, y0)` and `(x1, y1)`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new([
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.corners).abs()
    }

    pub fn centroid(&self) -> Point {
        let s = self.corners.iter().fold(Point::default(), |a, &b| a + b);
        Point::new(s.x / 4.0, s.y / 4.0)
    }

    /// Closed containment test with absolute slack `eps`.
    pub fn contains(&self, p: Point, eps: f64) -> bool {
        (0..4).all(|i| {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let len = a.dist(b);
            cross(a, b, p) >= -eps * len
        })
    }

    pub fn max_corner_distance(&self, other: &Quad) -> f64 {
        self.corners
            .iter()
            .zip(&other.corners)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max)
    }

    /// Like [`Quad::max_corner_distance`], minimized over cyclic relabelings.
    /// Near 45° the TL anchor can legitimately flip between two corners.
    pub fn cyclic_corner_distance(&self, other: &Quad) -> f64 {
        (0..4)
            .map(|k| {
                (0..4)
                    .map(|i| self.corners[(i + k) % 4].dist(other.corners[i]))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let xs = self.corners.map(|p| p.x);
        let ys = self.corners.map(|p| p.y);
        (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            ys.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

impl<'de> Deserialize<'de> for Quad {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let corners = <[Point; 4]>::deserialize(d)?;
        Quad::new(corners).map_err(serde::de::Error::custom)
    }
}

/// Shoelace signed area (positive for clockwise-on-screen order).
pub fn polygon_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Projective map, normalized so that `m[2][2] == 1` whenever it is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

const DET_EPS: f64 = 1e-12;
const DEPTH_EPS: f64 = 1e-12;

impl Homography {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let mut m = m;
        let s = m[2][2];
        if s != 0.0 {
            for row in &mut m {
                for v in row {
                    *v /= s;
                }
            }
        }
        let h = Self { m };
        if !h.determinant().is_finite() || h.determinant().abs() <= DET_EPS {
            return Err(Error::SingularHomography);
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]] }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    fn to_na(self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }

    fn from_na(m: &Matrix3<f64>) -> Result<Self> {
        Self::new([
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        self.to_na().determinant()
    }

    /// Adjugate inverse. Cofactors use an fma-compensated difference of
    /// products and are scaled by the (2,2) cofactor rather than the
    /// determinant, so each entry is within a few ulps of the exact inverse.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if !det.is_finite() || det == 0.0 {
            return Err(Error::SingularHomography);
        }
        let m = &self.m;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| diff_of_products(m[r0][c0], m[r1][c1], m[r0][c1], m[r1][c0]);
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        // new() rescales by adj[2][2]; when that is zero, fall back to det.
        let s = if adj[2][2] != 0.0 { 1.0 } else { det };
        Self::new(adj.map(|row| row.map(|v| v / s)))
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &Homography) -> Result<Self> {
        Self::from_na(&(self.to_na() * first.to_na()))
    }

    pub fn project(&self, p: Point) -> Result<Point> {
        project(self, p)
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                d = d.max((self.m[r][c] - other.m[r][c]).abs());
            }
        }
        d
    }
}

/// `a*b - c*d` with a single rounding error of `c*d` compensated.
fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let cd = c * d;
    let err = (-c).mul_add(d, cd);
    a.mul_add(b, -cd) + err
}

pub fn project(h: &Homography, p: Point) -> Result<Point> {
    let m = &h.m;
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if w.abs() <= DEPTH_EPS {
        return Err(Error::PointAtInfinity(w));
    }
    Ok(Point::new(
        (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
        (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
    ))
}

/// Similarity that moves the centroid to the origin and scales the mean
/// distance from it to √2.
fn hartley_normalization(pts: &[Point]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: Point) -> (f64, f64) {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    (v[0] / v[2], v[1] / v[2])
}

fn check_collinearity(pts: &[Point; 4]) -> Result<()> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        if !p.is_finite() {
            return Err(Error::DegenerateConfiguration);
        }
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let bbox = (x1 - x0) * (y1 - y0);
    if bbox <= 0.0 {
        return Err(Error::DegenerateConfiguration);
    }
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let area = cross(pts[i], pts[j], pts[k]).abs() / 2.0;
        if area < 1e-9 * bbox {
            return Err(Error::DegenerateConfiguration);
        }
    }
    Ok(())
}

/// Normalized DLT on one or more correspondences; the nullspace vector of the
/// stacked `2n x 9` system is the right singular vector of least singular value.
fn dlt(src: &[Point], dst: &[Point]) -> Result<Homography> {
    let n = src.len();
    let ts = hartley_normalization(src);
    let td = hartley_normalization(dst);
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for k in 0..n {
        let (x, y) = apply(&ts, src[k]);
        let (u, v) = apply(&td, dst[k]);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration)?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::DegenerateConfiguration)?;
    let h = v_t.row(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(Error::DegenerateConfiguration)?;
    let full = td_inv * hn * ts;
    if full[(2, 2)].abs() < 1e-15 * full.norm() {
        return Err(Error::DegenerateConfiguration);
    }
    Homography::from_na(&full).map_err(|_| Error::DegenerateConfiguration)
}

/// Exactly-determined homography from four correspondences.
pub fn estimate_homography(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography> {
    check_collinearity(src)?;
    check_collinearity(dst)?;
    dlt(src, dst)
}

/// Least-squares homography over `n >= 4` correspondences.
pub fn fit_homography(src: &[Point], dst: &[Point]) -> Result<Homography> {
    if src.len() != dst.len() || src.len() < 4 {
        return Err(Error::DegenerateConfiguration);
    }
    dlt(src, dst)
}

/// Monotone-chain convex hull.
///
/// Vertices are returned counter-clockwise in the y-up mathematical sense
/// (clockwise on screen), starting from the lowest-x, lowest-y point.
/// Points lying on hull edges are dropped.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    let mut pts: Vec<Point> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    Ok(hull)
}

/// Minimum-area enclosing rectangle by rotating calipers over the hull.
///
/// Returns the rectangle as an ordered quad and the angle of the hull edge
/// it is aligned with, folded into `[0, π/2)`.
pub fn min_area_rect(points: &[Point]) -> Result<(Quad, f64)> {
    let hull = convex_hull(points)?;
    let n = hull.len();
    let mut best: Option<(f64, f64, [Point; 4])> = None;
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let len = a.dist(b);
        if len == 0.0 {
            continue;
        }
        let u = Point::new((b.x - a.x) / len, (b.y - a.y) / len);
        let nrm = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut nmin, mut nmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let d = *p - a;
            let pu = d.x * u.x + d.y * u.y;
            let pn = d.x * nrm.x + d.y * nrm.y;
            umin = umin.min(pu);
            umax = umax.max(pu);
            nmin = nmin.min(pn);
            nmax = nmax.max(pn);
        }
        let area = (umax - umin) * (nmax - nmin);
        let angle = u.y.atan2(u.x).rem_euclid(std::f64::consts::FRAC_PI_2);
        let corner = |s: f64, t: f64| Point::new(a.x + s * u.x + t * nrm.x, a.y + s * u.y + t * nrm.y);
        let rect = [corner(umin, nmin), corner(umax, nmin), corner(umax, nmax), corner(umin, nmax)];
        let better = match &best {
            None => true,
            Some((ba, bang, _)) => {
                let tie = (area - ba).abs() <= 1e-12 * ba.abs().max(area.abs());
                if tie {
                    angle < *bang
                } else {
                    area < *ba
                }
            }
        };
        if better {
            best = Some((area, angle, rect));
        }
    }
    let (_, angle, rect) = best.ok_or(Error::DegenerateHull)?;
    // Folding near π/2 back to 0 keeps axis-aligned boxes at angle 0.
    let angle = if std::f64::consts::FRAC_PI_2 - angle < 1e-12 { 0.0 } else { angle };
    Ok((order_corners(rect)?, angle))
}

/// Canonical TL, TR, BR, BL ordering of four convex corners.
///
/// Corners are sorted by angle about their centroid (clockwise on screen),
/// then rotated so the corner with the smallest `x + y` comes first; ties
/// prefer the smaller `y`.
pub fn order_corners(points: [Point; 4]) -> Result<Quad> {
    let mut pts = points;
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(Error::NotConvex);
    }
    // Sorting first makes the centroid independent of input permutation.
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    pts.sort_by(|a, b| {
        let ta = (a.y - cy).atan2(a.x - cx);
        let tb = (b.y - cy).atan2(b.x - cx);
        ta.total_cmp(&tb)
    });
    let start = (0..4)
        .min_by(|&i, &j| {
            let si = pts[i].x + pts[i].y;
            let sj = pts[j].x + pts[j].y;
            si.total_cmp(&sj).then(pts[i].y.total_cmp(&pts[j].y))
        })
        .unwrap();
    pts.rotate_left(start);
    Quad::new(pts)
}
