use thiserror::Error;

/// Errors raised while building or interrogating the ambient space.
#[derive(Debug, Error)]
pub enum AmbientError {
    #[error("complex dimension {0} unsupported (only n = 1 and n = 2)")]
    UnsupportedDimension(usize),
    #[error("weight term degree {found} exceeds cap {cap}")]
    DegreeCap { found: u32, cap: u32 },
    #[error("weight coefficient is not finite")]
    NonFiniteCoefficient,
    #[error("malformed weight spec `{0}`: {1}")]
    WeightParse(String, String),
    #[error("operation requires n = 1, ambient has n = {0}")]
    RequiresDimensionOne(usize),
    #[error("point has {found} complex coordinates, ambient expects {expected}")]
    PointDimension { found: usize, expected: usize },
}

/// Errors raised by discrete-curve geometry.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("curve has {0} vertices, need at least 16")]
    TooFewVertices(usize),
    #[error("degenerate edge at vertex {0} (zero length)")]
    DegenerateEdge(usize),
    #[error("cusp at vertex {index}: turning angle {angle:.6} within cusp guard of pi")]
    Cusp { index: usize, angle: f64 },
    #[error("non-finite coordinate at vertex {0}")]
    NonFinitePoint(usize),
    #[error("angle winding residual {0:.3e} exceeds 0.01")]
    WindingResidual(f64),
    #[error("mesh quality {0:.4} below floor {1:.4} after remesh")]
    QualityFloor(f64, f64),
    #[error("vertex counts differ: {0} vs {1}")]
    MismatchedVertexCount(usize, usize),
    #[error("product factors need separable weights with n = 1 each")]
    ProductFactors,
}

/// Errors from the time integrator and remesher.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("step size {0:.3e} is not positive")]
    NonPositiveStep(f64),
    #[error("arclength resample failed: {0}")]
    Resample(String),
}

/// Errors from the verification and analysis layers.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("kernel evaluated at t = {t} with reference time t0 = {t0} (need t < t0)")]
    KernelTime { t: f64, t0: f64 },
    #[error("reference time t0 = {0} lies inside the sample range")]
    T0InsideSamples(f64),
    #[error("angle branch mismatch at vertex {index}: jump {jump:.4} exceeds pi")]
    BranchMismatch { index: usize, jump: f64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("snapshot unresolved: kernel width {width:.3e} below 3 x local edge length {h:.3e}")]
    Unresolved { width: f64, h: f64 },
    #[error("run did not terminate in blow-up")]
    NoBlowUp,
    #[error("invalid probe: {0}")]
    Probe(String),
}

/// Configuration file problems, with 1-based line numbers where known.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Other(String),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
}

/// Archive layout or IO problems.
#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("missing archive file {0}")]
    Missing(String),
    #[error("malformed {path}: {msg}")]
    Malformed { path: String, msg: String },
}
