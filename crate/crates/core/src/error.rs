use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spin |a| = {spin} exceeds the small-spin regime |a| <= 0.5 M = {limit}")]
    SpinRegime { spin: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("outside chart domain: {0}")]
    ChartDomain(String),
    #[error("metric inversion ill-conditioned: identity residual {0:e}")]
    Conditioning(f64),
    #[error("radial map condition violated: {0}")]
    RadialMap(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("slicing error: g^tt = {value} >= 0 at r = {r}, theta = {theta}")]
    Slicing { r: f64, theta: f64, value: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
