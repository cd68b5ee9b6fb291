use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("latitude {0}° outside the UTM domain [-84, 84]")]
    UnsupportedLatitude(f64),
    #[error("invalid geodetic point: {0}")]
    InvalidGeodetic(String),
    #[error("invalid UTM zone {0}")]
    InvalidZone(u8),
    #[error("no GDEM point within {radius} m of the altitude-sync reference")]
    SyncPointNotFound { radius: f64 },

    #[error("terrain is degenerate: {0}")]
    DegenerateTerrain(String),
    #[error("densified point count {expected:.3} is below one point")]
    EmptyDensification { expected: f64 },
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("raster dimensions mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("no GDEM point projects into the frame")]
    EmptyProjection,
    #[error("no ground anchors survive masking")]
    NoGroundAnchors,
    #[error("invalid range mask {0}")]
    InvalidRange(String),

    #[error("rough scaling invalidated {invalid} of {total} pixels")]
    RoughScaleDiverged { invalid: usize, total: usize },
    #[error("no valid rough depth in the central rows")]
    CfUndefined,
    #[error("point cloud contains non-finite coordinates")]
    InvalidCloud,
    #[error("cloth simulation failed: {0}")]
    CsfFailed(String),

    #[error("disparity map is constant or empty")]
    DegenerateDisparity,
    #[error("{found} anchor pairs, at least {required} required")]
    InsufficientAnchors { found: usize, required: usize },
    #[error("alignment system is degenerate (zero variance in the prediction)")]
    DegenerateSystem,
    #[error("recovered scale {s} is not positive (t = {t})")]
    NonPositiveScale { s: f64, t: f64 },
    #[error("prediction and reference have no overlapping valid pixels")]
    NoOverlap,
    #[error("no image row intersects the ground plane")]
    HorizonOnly,

    #[error("evaluation mask is empty")]
    EmptyEvaluation,

    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used in sidecars and session reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedLatitude(_) => "UnsupportedLatitude",
            Error::InvalidGeodetic(_) => "InvalidGeodetic",
            Error::InvalidZone(_) => "InvalidZone",
            Error::SyncPointNotFound { .. } => "SyncPointNotFound",
            Error::DegenerateTerrain(_) => "DegenerateTerrain",
            Error::EmptyDensification { .. } => "EmptyDensification",
            Error::Format { .. } => "FormatError",
            Error::InvalidCamera(_) => "InvalidCamera",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyProjection => "EmptyProjection",
            Error::NoGroundAnchors => "NoGroundAnchors",
            Error::InvalidRange(_) => "InvalidRange",
            Error::RoughScaleDiverged { .. } => "RoughScaleDiverged",
            Error::CfUndefined => "CfUndefined",
            Error::InvalidCloud => "InvalidCloud",
            Error::CsfFailed(_) => "CsfFailed",
            Error::DegenerateDisparity => "DegenerateDisparity",
            Error::InsufficientAnchors { .. } => "InsufficientAnchors",
            Error::DegenerateSystem => "DegenerateSystem",
            Error::NonPositiveScale { .. } => "NonPositiveScale",
            Error::NoOverlap => "NoOverlap",
            Error::HorizonOnly => "HorizonOnly",
            Error::EmptyEvaluation => "EmptyEvaluation",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Json { .. } => "JsonError",
        }
    }
}
