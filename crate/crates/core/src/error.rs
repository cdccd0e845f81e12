use std::path::PathBuf;

/// Errors raised by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image is too small ({width}x{height}, need at least {min}x{min})")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("degenerate point configuration (three points are collinear)")]
    DegenerateConfiguration,
    #[error("point maps to infinity (homogeneous depth {0:e})")]
    PointAtInfinity(f64),
    #[error("degenerate hull: points are collinear or fewer than 3 are distinct")]
    DegenerateHull,
    #[error("corners do not form a convex quadrilateral")]
    NotConvex,
    #[error("homography is singular")]
    SingularHomography,

    #[error("no foreground region found")]
    NoRegion,
    #[error("largest region has {area} pixels, below the minimum of {min_area}")]
    RegionTooSmall { area: usize, min_area: usize },

    #[error("no heatmap for frame {index} at {path}")]
    MissingHeatmap { index: usize, path: PathBuf },
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
    #[error("truncated data: {0}")]
    TruncatedData(String),

    #[error("no trackable features")]
    NoFeatures,
    #[error("tracking lost: {0}")]
    TrackingLost(String),

    #[error("compositing region is empty")]
    EmptyOmega,
    #[error("compositing region touches the frame border")]
    OmegaTouchesBorder,

    #[error("unsupported color space {0:?} (only C444 is accepted)")]
    UnsupportedColorSpace(String),
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("truncated frame {0}")]
    TruncatedFrame(usize),
    #[error("missing frame index {0} in sequence")]
    MissingFrameIndex(usize),
    #[error("unsupported PNG: {0}")]
    UnsupportedPngType(String),
    #[error("corner file schema violation: {0}")]
    SchemaViolation(String),

    #[error("no billboard found in scanned frames")]
    NoBillboardFound,
    #[error("quad leaves the frame at frame {0}")]
    QuadOutOfBounds(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
