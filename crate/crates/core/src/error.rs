use std::path::PathBuf;

/// Errors produced by every stage of the registration toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid transform parameters: {0}")]
    InvalidParams(String),

    #[error("transform matrix is singular (|det| = {det:e})")]
    Singular { det: f64 },

    #[error("image is {width}x{height}, at least {min}x{min} is required")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("only {contributing} of {selected} samples overlap the moving image")]
    InsufficientOverlap { contributing: usize, selected: usize },

    #[error("cost is undefined at the starting point: {0}")]
    InvalidStart(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),

    #[error("found {found} usable corners, {wanted} requested")]
    NotEnoughCorners { found: usize, wanted: usize },

    #[error("no visual/thermal pairs found under {0}")]
    NoPairsFound(PathBuf),

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
