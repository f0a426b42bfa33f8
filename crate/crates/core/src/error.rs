use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("ball of radius {radius} at ({cx}, {cy}) contains no resolvable cell (needs radius >= 2h = {min_radius})")]
    EmptyBall {
        cx: f64,
        cy: f64,
        radius: f64,
        min_radius: f64,
    },
    #[error("invalid exponent {value}: {expected}")]
    InvalidExponent { value: f64, expected: &'static str },
    #[error(
        "coefficient field is not elliptic: minimum eigenvalue {min_eigenvalue:e} at cell {cell}"
    )]
    NotElliptic { min_eigenvalue: f64, cell: usize },
    #[error("coefficient field is not symmetric (required by the {0} operator)")]
    NotSymmetric(&'static str),
    #[error("linear solver missed tolerance: relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("Dini integral diverges (partial sum {partial:e} at {levels} levels)")]
    Divergent { partial: f64, levels: usize },
    #[error("profile is not almost monotone: it vanishes on part of the window ending at r = {radius:e}")]
    NotAlmostMonotone { radius: f64 },
    #[error("scale underflow: radius {radius:e} is below the resolvable 2h = {min_radius:e}")]
    ScaleUnderflow { radius: f64, min_radius: f64 },
    #[error("ball too small or not strictly inside the domain: {0}")]
    BallTooSmall(String),
    #[error("bump radius {radius:e} below the minimum 4h = {min_radius:e}")]
    RadiusTooSmall { radius: f64, min_radius: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
