use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fundamental matrix: {0}")]
    InvalidFundamental(String),
    #[error("degenerate point: {0}")]
    DegeneratePoint(String),
    #[error("degenerate correspondence pair: Sampson denominator underflow")]
    DegeneratePair,
    #[error("degenerate affine map: similarity part vanishes")]
    DegenerateMap,
    #[error("affine map does not preserve orientation (mu_f = {0})")]
    OrientationDegenerate(f64),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("point ({x}, {y}) lies outside the triangulation")]
    OutOfDomain { x: f64, y: f64 },
    #[error("solver error: {0}")]
    Solver(String),
    #[error("coverage error: only {covered} of {total} samples lie in the map domain")]
    Coverage { covered: usize, total: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
