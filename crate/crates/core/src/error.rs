use thiserror::Error;

/// Every failure the numerical lab can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaghelmError {
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(u32),
    #[error("degenerate spectral parameter")]
    DegenerateSpectral,
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index below critical (nu^2 = {nu2})")]
    IndexBelowCritical { nu2: f64 },
    #[error("singular tridiagonal system at lambda = {lambda}, epsilon = {epsilon}")]
    SingularSystem { lambda: f64, epsilon: f64 },
    #[error("mode {index} beyond cutoff {cutoff}")]
    ModeBeyondCutoff { index: i32, cutoff: u32 },
    #[error("not radial-compatible: {0}")]
    NotRadialCompatible(String),
    #[error("green solver requires a potential without residual radial part")]
    GreenUnsupported,
    #[error("Bessel evaluation out of validated range (nu = {nu}, |z| = {z_abs})")]
    BesselRange { nu: f64, z_abs: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("no Hardy inequality: {0}")]
    NoHardyInequality(String),
    #[error("no iterations")]
    NoIterations,
    #[error("empty grid")]
    EmptyGrid,
    #[error("non-monotone epsilon sequence")]
    NonMonotoneSequence,
    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),
    #[error("radius {0} is not a mesh node")]
    OffMesh(f64),
    #[error("radii window overlaps the source support (first radius {radius}, support edge {support})")]
    WindowOverlapsSupport { radius: f64, support: f64 },
    #[error("multiplier rejected: {0}")]
    MultiplierRejected(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("x = 0 is excluded")]
    AtOrigin,
}

pub type Result<T> = std::result::Result<T, MaghelmError>;
