use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("annotation value contains the \"::\" delimiter: {0:?}")]
    DelimiterCollision(String),

    #[error("{class}: expected {expected} annotation fields, found {found}")]
    FieldCountMismatch {
        class: String,
        expected: usize,
        found: usize,
    },

    #[error("serial {serial} does not fit the {class} number format")]
    SerialOverflow { class: String, serial: u64 },

    #[error("batch count must be at least 1")]
    EmptyBatch,

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("{width}x{height} document does not fit on the A4 canvas at ({x}, {y})")]
    PlacementOverflow { width: u32, height: u32, x: u32, y: u32 },

    #[error("out of range: {0}")]
    Range(String),

    #[error("template schema error: {0}")]
    Schema(String),

    #[error("degenerate anchor: {0}")]
    DegenerateAnchor(String),

    #[error("unknown document class: {0}")]
    UnknownClass(String),

    #[error("template {template} does not belong to class {class}")]
    TemplateMismatch { template: String, class: String },

    #[error("crop region lies outside the image")]
    EmptyCrop,

    #[error("no document found in image")]
    NoDocumentFound,

    #[error("anchor text {0:?} not found in image")]
    AnchorNotFound(String),

    #[error("bad image: {0}")]
    BadImage(String),

    #[error("modification request {0} not found")]
    NotFound(i64),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Variant name, for callers that report errors by kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DelimiterCollision(_) => "DelimiterCollision",
            Error::FieldCountMismatch { .. } => "FieldCountMismatch",
            Error::SerialOverflow { .. } => "SerialOverflow",
            Error::EmptyBatch => "EmptyBatch",
            Error::InvalidBox(_) => "InvalidBox",
            Error::PlacementOverflow { .. } => "PlacementOverflow",
            Error::Range(_) => "Range",
            Error::Schema(_) => "Schema",
            Error::DegenerateAnchor(_) => "DegenerateAnchor",
            Error::UnknownClass(_) => "UnknownClass",
            Error::TemplateMismatch { .. } => "TemplateMismatch",
            Error::EmptyCrop => "EmptyCrop",
            Error::NoDocumentFound => "NoDocumentFound",
            Error::AnchorNotFound(_) => "AnchorNotFound",
            Error::BadImage(_) => "BadImage",
            Error::NotFound(_) => "NotFound",
            Error::Backend(_) => "Backend",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
            Error::Image(_) => "Image",
        }
    }

    pub(crate) fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

/// Attaches the offending path to an `io::Error`.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
