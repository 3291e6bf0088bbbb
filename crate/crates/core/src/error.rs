use thiserror::Error;

/// Errors produced by the core pipeline operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("window {x0},{y0} {w}x{h} exceeds raster bounds {width}x{height}")]
    Bounds {
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("inconsistent data: {0}")]
    Data(String),

    #[error("invalid registration: {0}")]
    Registration(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),
}

pub type Result<T> = std::result::Result<T, Error>;
