use thiserror::Error;

/// Errors raised across the selection pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SivoError {
    #[error("point is behind the camera (depth {depth:.4} m <= {min_depth} m)")]
    BehindCamera { depth: f64, min_depth: f64 },

    #[error("degenerate disparity {disparity:.4} px (must exceed {min_disparity} px)")]
    DegenerateDisparity { disparity: f64, min_disparity: f64 },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("MC sample set is empty")]
    EmptySampleSet,

    #[error("sample {index} has {found} classes, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("Gauss-Newton update diverged after {iterations} iterations")]
    DivergedUpdate { iterations: usize },

    #[error("estimator diverged at frame {frame}: {source}")]
    EstimatorDiverged {
        frame: usize,
        #[source]
        source: Box<SivoError>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}: rotation block is not rigid (drift {drift:.3e})")]
    NonRigidRotation { line: usize, drift: f64 },

    #[error("semantics row {row}: {reason}")]
    InvalidSemanticsRow { row: usize, reason: String },

    #[error("semantics file has inconsistent class counts ({expected} vs {found})")]
    InconsistentC { expected: usize, found: usize },

    #[error("trajectories share no frames")]
    NoOverlap,

    #[error("map reduction needs a non-zero baseline count")]
    ZeroBaseline,

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SivoError {
    fn from(e: std::io::Error) -> Self {
        SivoError::Io(e.to_string())
    }
}

pub type Result<T, E = SivoError> = std::result::Result<T, E>;
