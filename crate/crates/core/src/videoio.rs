//! Uncompressed video, PNG and corner-file I/O.
//!
//! Y4M is restricted to 4:4:4 planar YCbCr with full-range BT.601 coefficients.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use image::ImageEncoder;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{io_err, Error, Result};
use crate::geometry::{Point, Quad};
use crate::imagecore::Frame;

const Y4M_MAGIC: &str = "YUV4MPEG2";
const FRAME_TAG: &str = "FRAME";
/// Guard against absurd header dimensions before allocating planes.
const MAX_DIMENSION: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::MalformedHeader(format!("frame rate {num}:{den}")));
        }
        Ok(Self { num, den })
    }
}

impl Default for FrameRate {
    fn default() -> Self {
        Self { num: 25, den: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoStream {
    pub width: usize,
    pub height: usize,
    pub frame_rate: FrameRate,
    pub frame_count: usize,
}

impl VideoStream {
    fn plane_len(&self) -> usize {
        self.width * self.height
    }
}

fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> [f64; 3] {
    let y = y as f64 / 255.0;
    let cb = (cb as f64 - 128.0) / 255.0;
    let cr = (cr as f64 - 128.0) / 255.0;
    [
        (y + 1.402 * cr).clamp(0.0, 1.0),
        (y - 0.344136 * cb - 0.714136 * cr).clamp(0.0, 1.0),
        (y + 1.772 * cb).clamp(0.0, 1.0),
    ]
}

fn round_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn rgb_to_ycbcr([r, g, b]: [f64; 3]) -> [u8; 3] {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = -0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 0.5 * r - 0.418688 * g - 0.081312 * b;
    [round_u8(255.0 * y), round_u8(128.0 + 255.0 * cb), round_u8(128.0 + 255.0 * cr)]
}

fn read_line(r: &mut impl BufRead, what: &str) -> Result<Option<String>> {
    let mut buf = Vec::new();
    let n = r
        .read_until(b'\n', &mut buf)
        .map_err(|e| Error::MalformedHeader(format!("{what}: {e}")))?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader(format!("{what}: missing newline")));
    }
    buf.pop();
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| Error::MalformedHeader(format!("{what}: not ASCII")))
}

fn parse_header(line: &str) -> Result<(usize, usize, FrameRate)> {
    let mut tokens = line.split(' ');
    if tokens.next() != Some(Y4M_MAGIC) {
        return Err(Error::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let (mut w, mut h, mut rate, mut color) = (None, None, None, None);
    for tok in tokens.filter(|t| !t.is_empty()) {
        let (tag, val) = tok.split_at(1);
        let bad = || Error::MalformedHeader(format!("bad parameter {tok:?}"));
        match tag {
            "W" => w = Some(val.parse::<usize>().map_err(|_| bad())?),
            "H" => h = Some(val.parse::<usize>().map_err(|_| bad())?),
            "F" => {
                let (n, d) = val.split_once(':').ok_or_else(bad)?;
                rate = Some(FrameRate::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)?);
            }
            "C" => color = Some(val.to_string()),
            // Interlacing, aspect and extension tags carry nothing we use.
            "I" | "A" | "X" => {}
            _ => return Err(bad()),
        }
    }
    let w = w.ok_or_else(|| Error::MalformedHeader("missing W".into()))?;
    let h = h.ok_or_else(|| Error::MalformedHeader("missing H".into()))?;
    if w == 0 || h == 0 || w > MAX_DIMENSION || h > MAX_DIMENSION {
        return Err(Error::MalformedHeader(format!("dimensions {w}x{h}")));
    }
    let rate = rate.ok_or_else(|| Error::MalformedHeader("missing F".into()))?;
    // The format's default colorspace is 4:2:0.
    let color = color.unwrap_or_else(|| "420jpeg".into());
    if color != "444" {
        return Err(Error::UnsupportedColorSpace(format!("C{color}")));
    }
    Ok((w, h, rate))
}

fn check_frame_line(line: Option<String>, index: usize) -> Result<bool> {
    match line {
        None => Ok(false),
        Some(l) if l == FRAME_TAG || l.starts_with("FRAME ") => Ok(true),
        Some(l) => Err(Error::MalformedHeader(format!("expected FRAME before frame {index}, got {l:?}"))),
    }
}

/// Parses the header and counts frames without decoding them.
pub fn probe_y4m(path: &Path) -> Result<VideoStream> {
    let file = File::open(path).map_err(io_err(path))?;
    let len = file.metadata().map_err(io_err(path))?.len();
    let mut r = BufReader::new(file);
    let header = read_line(&mut r, "header")?.ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let (width, height, frame_rate) = parse_header(&header)?;
    let frame_bytes = (3 * width * height) as u64;
    let mut count = 0;
    while check_frame_line(read_line(&mut r, "frame marker")?, count)? {
        let pos = r.stream_position().map_err(io_err(path))?;
        if pos + frame_bytes > len {
            return Err(Error::TruncatedFrame(count));
        }
        r.seek(SeekFrom::Current(frame_bytes as i64)).map_err(io_err(path))?;
        count += 1;
    }
    Ok(VideoStream { width, height, frame_rate, frame_count: count })
}

/// Streaming frame reader; yields exactly `stream.frame_count` frames.
pub struct Y4mReader {
    reader: BufReader<File>,
    stream: VideoStream,
    next: usize,
    planes: Vec<u8>,
}

impl Y4mReader {
    pub fn stream(&self) -> &VideoStream {
        &self.stream
    }

    fn read_frame(&mut self) -> Result<Frame> {
        let index = self.next;
        if !check_frame_line(read_line(&mut self.reader, "frame marker")?, index)? {
            return Err(Error::TruncatedFrame(index));
        }
        self.reader.read_exact(&mut self.planes).map_err(|_| Error::TruncatedFrame(index))?;
        let n = self.stream.plane_len();
        let (yp, rest) = self.planes.split_at(n);
        let (cbp, crp) = rest.split_at(n);
        let mut data = Vec::with_capacity(3 * n);
        for i in 0..n {
            data.extend_from_slice(&ycbcr_to_rgb(yp[i], cbp[i], crp[i]));
        }
        self.next += 1;
        Frame::new(self.stream.width, self.stream.height, data)
    }
}

impl Iterator for Y4mReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Result<Frame>> {
        if self.next >= self.stream.frame_count {
            return None;
        }
        let r = self.read_frame();
        if r.is_err() {
            // Stop after the first error.
            self.next = self.stream.frame_count;
        }
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.stream.frame_count - self.next;
        (n, Some(n))
    }
}

pub fn read_y4m(path: &Path) -> Result<(VideoStream, Y4mReader)> {
    let stream = probe_y4m(path)?;
    let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    read_line(&mut reader, "header")?;
    let planes = vec![0; 3 * stream.plane_len()];
    Ok((stream, Y4mReader { reader, stream, next: 0, planes }))
}

pub fn read_y4m_frames(path: &Path) -> Result<(VideoStream, Vec<Frame>)> {
    let (stream, reader) = read_y4m(path)?;
    Ok((stream, reader.collect::<Result<_>>()?))
}

pub fn y4m_header(width: usize, height: usize, rate: FrameRate) -> String {
    format!("{Y4M_MAGIC} W{width} H{height} F{}:{} Ip A1:1 C444\n", rate.num, rate.den)
}

/// Encodes one frame (marker plus planes) into `out`.
pub fn encode_y4m_frame(frame: &Frame, out: &mut Vec<u8>) {
    let n = frame.width() * frame.height();
    out.extend_from_slice(b"FRAME\n");
    let start = out.len();
    out.resize(start + 3 * n, 0);
    for (i, px) in frame.data().chunks_exact(3).enumerate() {
        let [y, cb, cr] = rgb_to_ycbcr([px[0], px[1], px[2]]);
        out[start + i] = y;
        out[start + n + i] = cb;
        out[start + 2 * n + i] = cr;
    }
}

pub struct Y4mWriter<W: Write> {
    out: W,
    width: usize,
    height: usize,
    buf: Vec<u8>,
    frames: usize,
}

impl Y4mWriter<BufWriter<File>> {
    pub fn create(path: &Path, width: usize, height: usize, rate: FrameRate) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        Self::new(BufWriter::new(file), width, height, rate).map_err(|e| match e {
            Error::Io { source, .. } => Error::Io { path: path.to_path_buf(), source },
            other => other,
        })
    }
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut out: W, width: usize, height: usize, rate: FrameRate) -> Result<Self> {
        out.write_all(y4m_header(width, height, rate).as_bytes())
            .map_err(|source| Error::Io { path: PathBuf::new(), source })?;
        Ok(Self { out, width, height, buf: Vec::new(), frames: 0 })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        if frame.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch { expected: (self.width, self.height), actual: frame.dims() });
        }
        self.buf.clear();
        encode_y4m_frame(frame, &mut self.buf);
        self.out.write_all(&self.buf).map_err(|source| Error::Io { path: PathBuf::new(), source })?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> usize {
        self.frames
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|source| Error::Io { path: PathBuf::new(), source })?;
        Ok(self.out)
    }
}

pub fn write_y4m<'a>(path: &Path, width: usize, height: usize, rate: FrameRate, frames: impl IntoIterator<Item = &'a Frame>) -> Result<()> {
    let mut w = Y4mWriter::create(path, width, height, rate)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

/// File-name pattern with a single `%d` / `%0Nd` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePattern {
    prefix: String,
    suffix: String,
    width: usize,
}

impl SequencePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("pattern {pattern:?} needs one %d or %0Nd placeholder"));
        let start = pattern.find('%').ok_or_else(bad)?;
        let rest = &pattern[start + 1..];
        let end = rest.find('d').ok_or_else(bad)?;
        let spec = &rest[..end];
        let width = if spec.is_empty() {
            0
        } else if let Some(digits) = spec.strip_prefix('0') {
            digits.parse().map_err(|_| bad())?
        } else {
            return Err(bad());
        };
        let suffix = &rest[end + 1..];
        if suffix.contains('%') {
            return Err(bad());
        }
        Ok(Self { prefix: pattern[..start].to_string(), suffix: suffix.to_string(), width })
    }

    pub fn format(&self, index: usize) -> String {
        format!("{}{:0w$}{}", self.prefix, index, self.suffix, w = self.width)
    }

    pub fn match_index(&self, name: &str) -> Option<usize> {
        let digits = name.strip_prefix(&self.prefix)?.strip_suffix(&self.suffix)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok()
    }
}

pub fn load_png(path: &Path) -> Result<Frame> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageRgb8(rgb) => Frame::from_rgb8(w, h, rgb.as_raw()),
        image::DynamicImage::ImageRgba8(rgba) => {
            let rgb: Vec<u8> = rgba.as_raw().chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
            Frame::from_rgb8(w, h, &rgb)
        }
        other => Err(Error::UnsupportedPngType(format!("{:?} in {}", other.color(), path.display()))),
    }
}

/// Width and height from the PNG header, without decoding pixels.
pub fn png_dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path)?;
    Ok((w as usize, h as usize))
}

pub fn encode_png(frame: &Frame) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(
        &frame.to_rgb8(),
        frame.width() as u32,
        frame.height() as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

pub fn save_png(path: &Path, frame: &Frame) -> Result<()> {
    let bytes = encode_png(frame)?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Indices of files in `dir` matching `pattern`, sorted; the sequence must be
/// contiguous from its smallest index.
pub fn list_sequence(dir: &Path, pattern: &str) -> Result<Vec<(usize, PathBuf)>> {
    let pat = SequencePattern::parse(pattern)?;
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if let Some(i) = entry.file_name().to_str().and_then(|n| pat.match_index(n)) {
            found.push((i, entry.path()));
        }
    }
    found.sort();
    if let Some(&(first, _)) = found.first() {
        for (k, (i, _)) in found.iter().enumerate() {
            if *i != first + k {
                return Err(Error::MissingFrameIndex(first + k));
            }
        }
    }
    Ok(found)
}

pub fn read_png_sequence(dir: &Path, pattern: &str) -> Result<Vec<Frame>> {
    let frames: Vec<Frame> = list_sequence(dir, pattern)?
        .into_iter()
        .map(|(_, p)| load_png(&p))
        .collect::<Result<_>>()?;
    if let Some(f) = frames.first() {
        if let Some(g) = frames.iter().find(|g| g.dims() != f.dims()) {
            return Err(Error::DimensionMismatch { expected: f.dims(), actual: g.dims() });
        }
    }
    Ok(frames)
}

pub fn write_png_sequence<'a>(dir: &Path, pattern: &str, frames: impl IntoIterator<Item = &'a Frame>) -> Result<()> {
    let pat = SequencePattern::parse(pattern)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, f) in frames.into_iter().enumerate() {
        save_png(&dir.join(pat.format(i)), f)?;
    }
    Ok(())
}

/// Corner exchange record `{"frame": n, "corners": [[x, y]; 4]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CornerFile {
    pub frame: usize,
    pub corners: Quad,
}

impl CornerFile {
    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::SchemaViolation("expected an object".into()))?;
        let frame = obj
            .get("frame")
            .ok_or_else(|| Error::SchemaViolation("missing \"frame\"".into()))?
            .as_u64()
            .ok_or_else(|| Error::SchemaViolation("\"frame\" must be a non-negative integer".into()))?;
        let corners = parse_corners(obj.get("corners").ok_or_else(|| Error::SchemaViolation("missing \"corners\"".into()))?)?;
        Ok(Self { frame: frame as usize, corners: Quad::new(corners)? })
    }
}

/// Reads four `[x, y]` pairs without validating the quad.
pub fn parse_corners(v: &Value) -> Result<[Point; 4]> {
    let arr = v.as_array().ok_or_else(|| Error::SchemaViolation("\"corners\" must be an array".into()))?;
    if arr.len() != 4 {
        return Err(Error::SchemaViolation(format!("expected 4 corners, got {}", arr.len())));
    }
    let mut out = [Point::default(); 4];
    for (o, c) in out.iter_mut().zip(arr) {
        let xy = c
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::SchemaViolation(format!("corner {c} is not an [x, y] pair")))?;
        let num = |v: &Value| v.as_f64().ok_or_else(|| Error::SchemaViolation(format!("non-numeric coordinate {v}")));
        *o = Point::new(num(&xy[0])?, num(&xy[1])?);
    }
    Ok(out)
}

pub fn read_corners_json(path: &Path) -> Result<CornerFile> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::SchemaViolation(e.to_string()))?;
    CornerFile::from_value(&v)
}

/// serde_json prints the shortest decimal that parses back to the same f64,
/// so the round trip is exact.
pub fn write_corners_json(path: &Path, frame: usize, quad: &Quad) -> Result<()> {
    let text = serde_json::to_string(&CornerFile { frame, corners: *quad })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Frame {
        Frame::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn neutral_chroma_is_gray() {
        let [r, g, b] = ycbcr_to_rgb(128, 128, 128);
        assert_eq!(r, 128.0 / 255.0);
        assert_eq!(g, 128.0 / 255.0);
        assert_eq!(b, 128.0 / 255.0);
        assert!((r - 0.502).abs() < 1e-3);
    }

    #[test]
    fn black_and_white_encode() {
        assert_eq!(rgb_to_ycbcr([0.0; 3]), [0, 128, 128]);
        assert_eq!(rgb_to_ycbcr([1.0; 3]), [255, 128, 128]);
    }

    #[test]
    fn header_format() {
        let r = FrameRate::new(30000, 1001).unwrap();
        assert_eq!(y4m_header(4, 4, r), "YUV4MPEG2 W4 H4 F30000:1001 Ip A1:1 C444\n");
    }

    #[test]
    fn file_size_and_planes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.y4m");
        let black = Frame::filled(4, 4, [0.0; 3]).unwrap();
        write_y4m(&p, 4, 4, FrameRate::new(25, 1).unwrap(), [&black, &black]).unwrap();
        let bytes = fs::read(&p).unwrap();
        let header = y4m_header(4, 4, FrameRate::new(25, 1).unwrap());
        assert_eq!(bytes.len(), header.len() + 2 * (6 + 48));
        let planes = &bytes[header.len() + 6..header.len() + 6 + 48];
        assert!(planes[..16].iter().all(|&b| b == 0));
        assert!(planes[16..].iter().all(|&b| b == 128));
    }

    #[test]
    fn y4m_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.y4m");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<Frame> = (0..3).map(|_| random_frame(7, 5, &mut rng)).collect();
        write_y4m(&p, 7, 5, FrameRate::new(30000, 1001).unwrap(), &frames).unwrap();
        let (stream, back) = read_y4m_frames(&p).unwrap();
        assert_eq!((stream.width, stream.height, stream.frame_count), (7, 5, 3));
        assert_eq!(stream.frame_rate, FrameRate::new(30000, 1001).unwrap());
        for (a, b) in frames.iter().zip(&back) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 2.0 / 255.0);
            }
        }
    }

    #[test]
    fn y4m_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.y4m");
        fs::write(&p, b"YUV4MPEG2 W4 H4 F25:1 Ip A1:1 C420jpeg\n").unwrap();
        assert!(matches!(read_y4m(&p), Err(Error::UnsupportedColorSpace(_))));
        fs::write(&p, b"YUV4MPEG2 W4 H4 F25:1\n").unwrap();
        assert!(matches!(read_y4m(&p), Err(Error::UnsupportedColorSpace(_))));
        fs::write(&p, b"YUV4MPEG W4 H4 F25:1 C444\n").unwrap();
        assert!(matches!(read_y4m(&p), Err(Error::MalformedHeader(_))));
        fs::write(&p, b"YUV4MPEG2 H4 F25:1 C444\n").unwrap();
        assert!(matches!(read_y4m(&p), Err(Error::MalformedHeader(_))));
        fs::write(&p, b"YUV4MPEG2 W4 H4 F25:0 C444\n").unwrap();
        assert!(matches!(read_y4m(&p), Err(Error::MalformedHeader(_))));
        let mut bytes = b"YUV4MPEG2 W2 H2 F25:1 C444\nFRAME\n".to_vec();
        bytes.extend([0u8; 12]);
        bytes.extend(b"FRAME\n");
        bytes.extend([0u8; 11]);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_y4m(&p), Err(Error::TruncatedFrame(1))));
    }

    #[test]
    fn frame_markers_with_parameters_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.y4m");
        let mut bytes = b"YUV4MPEG2 W1 H1 F25:1 C444 XYSCSS=444\n".to_vec();
        for _ in 0..3 {
            bytes.extend(b"FRAME Ixyz\n");
            bytes.extend([16u8, 128, 128]);
        }
        fs::write(&p, &bytes).unwrap();
        let (stream, frames) = read_y4m_frames(&p).unwrap();
        assert_eq!(stream.frame_count, 3);
        assert_eq!(frames.len(), 3);
    }

    #[test]
    fn png_sequence_round_trip_and_gap() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames: Vec<Frame> = (0..3)
            .map(|_| {
                let bytes: Vec<u8> = (0..6 * 4 * 3).map(|_| rng.random()).collect();
                Frame::from_rgb8(6, 4, &bytes).unwrap()
            })
            .collect();
        write_png_sequence(dir.path(), "frame_%06d.png", &frames).unwrap();
        assert!(dir.path().join("frame_000002.png").exists());
        let back = read_png_sequence(dir.path(), "frame_%06d.png").unwrap();
        assert_eq!(back, frames);
        fs::remove_file(dir.path().join("frame_000001.png")).unwrap();
        assert!(matches!(read_png_sequence(dir.path(), "frame_%06d.png"), Err(Error::MissingFrameIndex(1))));
    }

    #[test]
    fn png_alpha_ignored_and_gray_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        image::RgbaImage::from_raw(1, 1, vec![10, 20, 30, 0]).unwrap().save(&p).unwrap();
        assert_eq!(load_png(&p).unwrap().to_rgb8(), vec![10, 20, 30]);
        image::GrayImage::from_raw(1, 1, vec![10]).unwrap().save(&p).unwrap();
        assert!(matches!(load_png(&p), Err(Error::UnsupportedPngType(_))));
    }

    #[test]
    fn sequence_patterns() {
        let p = SequencePattern::parse("f_%04d.png").unwrap();
        assert_eq!(p.format(7), "f_0007.png");
        assert_eq!(p.match_index("f_0012.png"), Some(12));
        assert_eq!(p.match_index("f_12.png"), Some(12));
        assert_eq!(p.match_index("g_0012.png"), None);
        assert_eq!(SequencePattern::parse("x%d").unwrap().format(3), "x3");
        assert!(SequencePattern::parse("nothing.png").is_err());
        assert!(SequencePattern::parse("%d_%d").is_err());
    }

    #[test]
    fn corners_parse_and_schema() {
        let v: Value = serde_json::from_str(r#"{"frame":0,"corners":[[0,0],[10,0],[10,5],[0,5]]}"#).unwrap();
        let c = CornerFile::from_value(&v).unwrap();
        assert_eq!(c.frame, 0);
        assert_eq!(c.corners, Quad::rect(0.0, 0.0, 10.0, 5.0).unwrap());
        for bad in [
            r#"{"frame":0,"corners":[[0,0],[10,0],[10,5]]}"#,
            r#"{"frame":0,"corners":[[0,0],[10,0],[10,"a"],[0,5]]}"#,
            r#"{"corners":[[0,0],[10,0],[10,5],[0,5]]}"#,
            r#"{"frame":0}"#,
            r#"{"frame":-1,"corners":[[0,0],[10,0],[10,5],[0,5]]}"#,
            r#"[1,2]"#,
        ] {
            let v: Value = serde_json::from_str(bad).unwrap();
            assert!(matches!(CornerFile::from_value(&v), Err(Error::SchemaViolation(_))), "{bad}");
        }
        let v: Value = serde_json::from_str(r#"{"frame":0,"corners":[[0,0],[10,5],[10,0],[0,5]]}"#).unwrap();
        assert!(matches!(CornerFile::from_value(&v), Err(Error::NotConvex)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn corners_round_trip_exactly(x0 in -1e3f64..1e3, y0 in -1e3f64..1e3, w in 1e-3f64..1e3, h in 1e-3f64..1e3,
                                       dx in -0.4f64..0.4, dy in -0.4f64..0.4, frame in 0usize..100_000) {
            let q = Quad::new([
                Point::new(x0, y0),
                Point::new(x0 + w, y0 + dy * h),
                Point::new(x0 + w * (1.0 + dx), y0 + h),
                Point::new(x0 + dx * w * 0.5, y0 + h * (1.0 - dy * 0.5)),
            ]);
            prop_assume!(q.is_ok());
            let q = q.unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("c.json");
            write_corners_json(&p, frame, &q).unwrap();
            let back = read_corners_json(&p).unwrap();
            prop_assert_eq!(back.frame, frame);
            prop_assert_eq!(back.corners, q);
        }
    }
}
