//! Billboard recognizer/localizer boundary.
//!
//! External models hand their per-pixel probabilities over as binary PGM
//! files, one per frame. The chroma baseline is a deterministic localizer that
//! scores each pixel by its color distance to a reference color.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{io_err, Error, Result};
use crate::imagecore::Frame;
use crate::maskops::Heatmap;

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSource {
    /// `<dir>/<stem>_%06d.pgm`, keyed by frame index.
    HeatmapFiles { dir: PathBuf, stem: String },
    /// Gaussian similarity `exp(-|rgb - color|² / (2 sigma²))`.
    ChromaBaseline { color: [f64; 3], sigma: f64 },
}

pub const DEFAULT_HEATMAP_STEM: &str = "heatmap";
pub const DEFAULT_BASELINE_SIGMA: f64 = 0.1;

impl DetectorSource {
    pub fn heatmap_files(dir: impl Into<PathBuf>, stem: impl Into<String>) -> Self {
        Self::HeatmapFiles { dir: dir.into(), stem: stem.into() }
    }

    pub fn chroma(color: [f64; 3], sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidConfig(format!("chroma baseline color {color:?} sigma {sigma}")));
        }
        Ok(Self::ChromaBaseline { color, sigma })
    }

    /// Path of the heatmap file for `index` (file sources only).
    pub fn heatmap_path(&self, index: usize) -> Option<PathBuf> {
        match self {
            Self::HeatmapFiles { dir, stem } => Some(heatmap_path(dir, stem, index)),
            Self::ChromaBaseline { .. } => None,
        }
    }
}

pub fn heatmap_path(dir: &Path, stem: &str, index: usize) -> PathBuf {
    dir.join(format!("{stem}_{index:06}.pgm"))
}

/// Probability that the frame shows a billboard: the heatmap maximum.
pub fn recognize(source: &DetectorSource, frame_index: usize, frame: &Frame) -> Result<f64> {
    Ok(localize(source, frame_index, frame)?.max())
}

pub fn localize(source: &DetectorSource, frame_index: usize, frame: &Frame) -> Result<Heatmap> {
    match source {
        DetectorSource::HeatmapFiles { dir, stem } => {
            let path = heatmap_path(dir, stem, frame_index);
            if !path.is_file() {
                return Err(Error::MissingHeatmap { index: frame_index, path });
            }
            let h = load_heatmap_pgm(&path)?;
            if h.dims() != frame.dims() {
                return Err(Error::DimensionMismatch { expected: frame.dims(), actual: h.dims() });
            }
            Ok(h)
        }
        DetectorSource::ChromaBaseline { color, sigma } => Ok(chroma_heatmap(frame, *color, *sigma)),
    }
}

pub fn chroma_heatmap(frame: &Frame, color: [f64; 3], sigma: f64) -> Heatmap {
    let denom = 2.0 * sigma * sigma;
    let data = frame
        .data()
        .chunks_exact(3)
        .map(|p| {
            let d2: f64 = p.iter().zip(&color).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / denom).exp()
        })
        .collect();
    Heatmap::new(frame.width(), frame.height(), data).expect("similarity lies in [0, 1]")
}

/// Reads a binary (P5) PGM with maxval 255 or 65535.
pub fn load_heatmap_pgm(path: &Path) -> Result<Heatmap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Heatmap> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::MalformedPgm("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and comments may separate header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::MalformedPgm("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedPgm(format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedPgm("header number out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::MalformedPgm(format!("dimensions {width}x{height}")));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::MalformedPgm(format!("unsupported maxval {maxval}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedPgm("missing whitespace after maxval".into())),
    }
    let n = width.checked_mul(height).ok_or_else(|| Error::MalformedPgm("dimensions overflow".into()))?;
    let sample_bytes = if maxval == 255 { 1 } else { 2 };
    let body = &bytes[pos..];
    if body.len() < n * sample_bytes {
        return Err(Error::TruncatedData(format!("expected {} sample bytes, found {}", n * sample_bytes, body.len())));
    }
    let scale = maxval as f64;
    let data = if sample_bytes == 1 {
        body[..n].iter().map(|&b| f64::from(b) / scale).collect()
    } else {
        body[..2 * n].chunks_exact(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / scale).collect()
    };
    Heatmap::new(width, height, data)
}

/// Sample depth of a written PGM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

pub fn encode_pgm(h: &Heatmap, depth: PgmDepth) -> Vec<u8> {
    let maxval: u32 = match depth {
        PgmDepth::Eight => 255,
        PgmDepth::Sixteen => 65535,
    };
    let mut out = format!("P5\n{} {}\n{}\n", h.width(), h.height(), maxval).into_bytes();
    for &v in h.data() {
        let q = (v * maxval as f64 + 0.5).floor().clamp(0.0, maxval as f64) as u32;
        match depth {
            PgmDepth::Eight => out.push(q as u8),
            PgmDepth::Sixteen => out.extend((q as u16).to_be_bytes()),
        }
    }
    out
}

pub fn write_heatmap_pgm(path: &Path, h: &Heatmap, depth: PgmDepth) -> Result<()> {
    fs::write(path, encode_pgm(h, depth)).map_err(io_err(path))
}
