use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension d = {0} is not supported: the construction requires d >= 2")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "delta = {delta} violates the delta-condition 0 < delta <= R(1 - 1/sqrt 2) = {max} for R = {radius}"
    )]
    DeltaCondition { delta: f64, radius: f64, max: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown surface `{0}` (expected one of: zero, affine, quadratic, gaussian_bump, sinusoid)")]
    UnknownSurface(String),

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("condition number {cond:.3e} exceeds limit {limit:.1e}{}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    IllConditioned {
        cond: f64,
        limit: f64,
        layer: Option<usize>,
    },

    #[error("projection direction is degenerate (zero vector)")]
    DegenerateDirection,

    #[error("slope check failed at x = {x:?}: F(x,1) - F(x,0) = {slope} (expected -1)")]
    SlopeCheck { x: Vec<f64>, slope: f64 },

    #[error("malformed weight file: {0}")]
    Malformed(String),

    #[error("unsupported weight file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
