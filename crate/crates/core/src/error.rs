use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad PLY: {0}")]
    Ply(String),

    #[error("bad raster: {0}")]
    Raster(String),

    #[error("bad camera: {0}")]
    Camera(String),

    #[error("missing frame file: {}", .0.display())]
    MissingFrame(PathBuf),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("bad config: {0}")]
    Config(String),

    #[error("bad boxes: {0}")]
    Boxes(String),

    #[error("bad labels: {0}")]
    Labels(String),

    #[error("bad scene spec: {0}")]
    Scene(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for each failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Ply(_) => 3,
            Error::MissingFrame(_) => 4,
            Error::Dimension(_) => 5,
            Error::Config(_) => 6,
            Error::Raster(_) | Error::Camera(_) => 7,
            Error::Boxes(_) => 8,
            Error::Labels(_) => 9,
            Error::Scene(_) => 10,
            Error::Invalid(_) | Error::Json(_) => 11,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
