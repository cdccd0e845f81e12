//! Raster containers, luma conversion, sampling, gradients and pyramids.
//!
//! Intensities are normalized reals in `[0, 1]`; 8-bit quantization only
//! happens at the I/O boundary. Pixel `(x, y)` is the sample located at the
//! image-plane point `(x, y)`, so integer coordinates address pixel centers.

use crate::error::{Error, Result};

/// Interleaved RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("frame must be at least 1x1".into()));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    /// Builds a frame from per-pixel values, clamping them into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame must be at least 1x1");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self { width, height, data }
    }

    /// Unchecked constructor for values already known to be in range.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        Self { width, height, data }
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        Self::new(width, height, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    /// Quantizes to 8 bits, rounding half up.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
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

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// One channel as a single-plane image.
    pub fn channel(&self, c: usize) -> GrayImage {
        assert!(c < 3);
        GrayImage::from_raw(
            self.width,
            self.height,
            self.data.iter().skip(c).step_by(3).copied().collect(),
        )
    }
}

pub(crate) fn quantize_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Single-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("image must be at least 1x1".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image must be at least 1x1");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear interpolation with coordinates clamped to
    /// `[0, width-1] x [0, height-1]`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        sample_plane(&self.data, self.width, self.height, x, y)
    }
}

/// Signed per-pixel field with the same layout as a [`GrayImage`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        sample_plane(&self.data, self.width, self.height, x, y)
    }
}

#[inline]
pub(crate) fn sample_plane(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, (width - 1) as f64) };
    let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, (height - 1) as f64) };
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = data[y0 * width + x0] * (1.0 - fx) + data[y0 * width + x1] * fx;
    let bottom = data[y1 * width + x0] * (1.0 - fx) + data[y1 * width + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(frame: &Frame) -> GrayImage {
    let data = frame
        .data
        .chunks_exact(3)
        .map(|p| (LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2]).clamp(0.0, 1.0))
        .collect();
    GrayImage::from_raw(frame.width, frame.height, data)
}

pub fn bilinear_sample(image: &GrayImage, x: f64, y: f64) -> f64 {
    image.sample(x, y)
}

/// Central-difference gradients with replicated borders.
pub fn gradient(image: &GrayImage) -> Result<(Field, Field)> {
    let (w, h) = image.dims();
    if w < 3 || h < 3 {
        return Err(Error::TooSmall { width: w, height: h, min: 3 });
    }
    let mut ix = vec![0.0; w * h];
    let mut iy = vec![0.0; w * h];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            ix[y * w + x] = (image.get(xp, y) - image.get(xm, y)) / 2.0;
            iy[y * w + x] = (image.get(x, yp) - image.get(x, ym)) / 2.0;
        }
    }
    Ok((
        Field { width: w, height: h, data: ix },
        Field { width: w, height: h, data: iy },
    ))
}

/// Gaussian pyramid, level 0 at full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    levels: Vec<GrayImage>,
}

impl Pyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &GrayImage {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Smallest width or height a coarser pyramid level may have.
pub const MIN_PYRAMID_SIZE: usize = 8;

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Builds up to `levels` levels; stops early rather than producing a level
/// smaller than 8x8.
pub fn build_pyramid(image: &GrayImage, levels: usize) -> Pyramid {
    let mut out = vec![image.clone()];
    while out.len() < levels.max(1) {
        let prev = out.last().unwrap();
        let (nw, nh) = (prev.width / 2, prev.height / 2);
        if nw < MIN_PYRAMID_SIZE || nh < MIN_PYRAMID_SIZE {
            break;
        }
        out.push(downsample(prev, nw, nh));
    }
    Pyramid { levels: out }
}

fn downsample(img: &GrayImage, nw: usize, nh: usize) -> GrayImage {
    let (w, h) = img.dims();
    // Horizontal pass only on the even columns that survive decimation.
    let mut horiz = vec![0.0; nw * h];
    for y in 0..h {
        for ox in 0..nw {
            let cx = (2 * ox) as isize;
            let mut acc = 0.0;
            for (k, wgt) in BINOMIAL.iter().enumerate() {
                let sx = (cx + k as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += wgt * img.get(sx, y);
            }
            horiz[y * nw + ox] = acc;
        }
    }
    let mut data = vec![0.0; nw * nh];
    for oy in 0..nh {
        let cy = (2 * oy) as isize;
        for ox in 0..nw {
            let mut acc = 0.0;
            for (k, wgt) in BINOMIAL.iter().enumerate() {
                let sy = (cy + k as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += wgt * horiz[sy * nw + ox];
            }
            data[oy * nw + ox] = acc.clamp(0.0, 1.0);
        }
    }
    GrayImage::from_raw(nw, nh, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn grayscale_of_white_and_red() {
        let white = Frame::filled(4, 3, [1.0; 3]).unwrap();
        assert!(to_grayscale(&white).data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let red = Frame::filled(4, 3, [1.0, 0.0, 0.0]).unwrap();
        assert!(to_grayscale(&red).data().iter().all(|&v| v == 0.299));
    }

    #[test]
    fn grayscale_matches_scalar_formula() {
        let f = random_frame(17, 11, 3);
        let g = to_grayscale(&f);
        for y in 0..11 {
            for x in 0..17 {
                let [r, gg, b] = f.pixel(x, y);
                assert_eq!(g.get(x, y), 0.299 * r + 0.587 * gg + 0.114 * b);
            }
        }
    }

    #[test]
    fn frame_rejects_out_of_range() {
        assert!(Frame::new(1, 1, vec![0.0, 1.2, 0.0]).is_err());
        assert!(Frame::new(0, 1, vec![]).is_err());
        assert!(Frame::new(2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn sample_exact_midpoint_and_clamped() {
        let img = GrayImage::from_fn(8, 8, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        assert_eq!(img.sample(3.0, 5.0), img.get(3, 5));
        let ramp = GrayImage::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(ramp.sample(0.5, 0.0), 0.5);
        assert_eq!(img.sample(-4.2, 2.0), img.sample(0.0, 2.0));
        assert_eq!(img.sample(100.0, 100.0), img.get(7, 7));
    }

    #[test]
    fn gradient_of_ramp_and_constant() {
        let w = 10;
        let ramp = GrayImage::from_fn(w, 6, |x, _| x as f64 / (w - 1) as f64);
        let (ix, iy) = gradient(&ramp).unwrap();
        for y in 0..6 {
            for x in 1..w - 1 {
                assert!((ix.get(x, y) - 1.0 / (w - 1) as f64).abs() < 1e-15);
            }
            for x in 0..w {
                assert_eq!(iy.get(x, y), 0.0);
            }
        }
        let c = GrayImage::from_fn(5, 5, |_, _| 0.3);
        let (ix, iy) = gradient(&c).unwrap();
        assert!(ix.data.iter().chain(&iy.data).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_exact_on_quadratic() {
        // x² on an unnormalized grid; central differences recover 2x exactly.
        let w = 9;
        let img = GrayImage::from_raw(w, 4, (0..4).flat_map(|_| (0..w).map(|x| (x * x) as f64)).collect());
        let (ix, _) = gradient(&img).unwrap();
        for y in 0..4 {
            for x in 1..w - 1 {
                assert_eq!(ix.get(x, y), 2.0 * x as f64);
            }
        }
    }

    #[test]
    fn gradient_too_small() {
        let img = GrayImage::from_fn(2, 5, |_, _| 0.0);
        assert!(matches!(gradient(&img), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn pyramid_dims_and_cap() {
        let img = GrayImage::from_fn(64, 48, |_, _| 0.5);
        let p = build_pyramid(&img, 3);
        let dims: Vec<_> = p.levels().iter().map(|l| l.dims()).collect();
        assert_eq!(dims, vec![(64, 48), (32, 24), (16, 12)]);
        for l in p.levels() {
            assert!(l.data().iter().all(|&v| v == 0.5));
        }
        let small = GrayImage::from_fn(20, 20, |_, _| 0.1);
        let p = build_pyramid(&small, 6);
        assert_eq!(p.len(), 2);
        assert_eq!(p.level(1).dims(), (10, 10));
    }

    #[test]
    fn pyramid_preserves_dyadic_constants() {
        for &c in &[0.0, 0.25, 0.75, 1.0] {
            let img = GrayImage::from_fn(40, 33, |_, _| c);
            let p = build_pyramid(&img, 4);
            for l in p.levels() {
                assert!(l.data().iter().all(|&v| v == c));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn gradient_exact_on_affine(a in -4i32..4, b in -4i32..4, c in 0i32..64) {
            // Dyadic coefficients keep the arithmetic exact.
            let (a, b, c) = (a as f64 / 64.0, b as f64 / 64.0, c as f64 / 64.0);
            let img = GrayImage::from_raw(7, 6, (0..6).flat_map(|y| (0..7).map(move |x| a * x as f64 + b * y as f64 + c)).collect());
            let (ix, iy) = gradient(&img).unwrap();
            for y in 1..5 {
                for x in 1..6 {
                    proptest::prop_assert_eq!(ix.get(x, y), a);
                    proptest::prop_assert_eq!(iy.get(x, y), b);
                }
            }
        }

        #[test]
        fn sampling_is_lipschitz(seed in 0u64..1000, x in 0.0f64..6.0, y in 0.0f64..6.0, eps in 0.0f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(8, 8, |_, _| rng.random());
            // Largest forward difference bounds the slope of every bilinear cell.
            let mut bound: f64 = 0.0;
            for yy in 0..8 {
                for xx in 0..7 {
                    bound = bound.max((img.get(xx + 1, yy) - img.get(xx, yy)).abs());
                }
            }
            let d = (img.sample(x + eps, y) - img.sample(x, y)).abs();
            proptest::prop_assert!(d <= eps * bound + 1e-12);
        }

        #[test]
        fn grayscale_stays_in_unit_range(seed in 0u64..500) {
            let g = to_grayscale(&random_frame(5, 4, seed));
            proptest::prop_assert!(g.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
