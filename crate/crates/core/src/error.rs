//! Crate-wide error type. Variants map 1:1 onto CLI exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mode geometry is unusable: overlapping disks, duplicate focus pixels,
    /// out-of-range indices.
    #[error("geometry: {0}")]
    Geometry(String),

    /// Requested more modes than the plane or fibre can carry.
    #[error("capacity: {0}")]
    Capacity(String),

    /// Mutually unbiased bases are only constructed for d = 2 and d = 3.
    #[error("no MUB construction for dimension {0} (supported: 2, 3)")]
    UnsupportedDimension(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown gate name '{0}'")]
    UnknownGate(String),

    /// Realized map carries no power; gate fidelity has no value.
    #[error("undefined fidelity: {0}")]
    UndefinedFidelity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An optimization objective with no gradient information anywhere.
    #[error("degenerate objective: {0}")]
    DegenerateObjective(String),

    /// Fit diverged; the step size is too large for this instance.
    #[error("divergence: {0}")]
    StepSize(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    /// Estimator input is missing required settings or outcomes.
    #[error("incomplete data: {0}")]
    IncompleteData(String),

    /// Detection pattern refers to modes outside the declared output sets or
    /// reuses a detector.
    #[error("invalid detection pattern: {0}")]
    InvalidPattern(String),

    /// Projector with (numerically) zero norm.
    #[error("degenerate projector: {0}")]
    DegenerateProjector(String),

    /// Detection pattern that can never fire for the given inputs.
    #[error("pattern has zero success probability: {0}")]
    Unheraldable(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Artifact file is not valid JSON. Offsets are 0-based bytes into the file.
    #[error("parse error at byte {offset} (line {line}, column {column})")]
    Parse {
        line: usize,
        column: usize,
        offset: usize,
    },

    /// Artifact holds a different payload kind than the caller asked for.
    #[error("artifact holds '{found}', expected '{expected}'")]
    TypeTag { expected: String, found: String },

    /// Artifact written by an incompatible schema revision.
    #[error("artifact schema version {found} not supported (current {current}); no migration path")]
    VersionMismatch { found: u32, current: u32 },
}

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Geometry(_) => 10,
            Error::Capacity(_) => 11,
            Error::UnsupportedDimension(_) => 12,
            Error::Shape(_) => 13,
            Error::UnknownGate(_) => 14,
            Error::UndefinedFidelity(_) => 15,
            Error::Numerical(_) => 16,
            Error::DegenerateObjective(_) => 17,
            Error::StepSize(_) => 18,
            Error::EmptyData(_) => 19,
            Error::IncompleteData(_) => 20,
            Error::InvalidPattern(_) => 21,
            Error::DegenerateProjector(_) => 22,
            Error::Unheraldable(_) => 23,
            Error::Parameter(_) => 24,
            Error::Io(_) => 30,
            Error::Parse { .. } => 31,
            Error::TypeTag { .. } => 32,
            Error::VersionMismatch { .. } => 33,
        }
    }
}
