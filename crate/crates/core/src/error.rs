use thiserror::Error;

/// Errors raised by the homogenization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular 3x3 matrix at cell {cell}")]
    SingularCell { cell: usize },

    #[error("singular 3x3 matrix")]
    SingularMatrix,

    #[error("zero frequency has no Green operator; the caller pins the k = 0 mode")]
    ZeroFrequency,

    #[error("grid mismatch: expected {expected:?}, got {found:?}")]
    GridMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("unknown phase id {id} at cell {cell}")]
    UnknownPhase { id: u16, cell: usize },

    #[error("malformed phase map: {0}")]
    MalformedPhaseMap(String),

    #[error(
        "mean stress vanishes, the normalized equilibrium error is undefined; \
         use an absolute divergence residual instead"
    )]
    ZeroMeanStress,

    #[error("polarization is nonzero outside the range of d = C - C0 at cell {cell}")]
    SingularContrast { cell: usize },

    #[error(
        "I - H is singular (an eigenvalue of the projected Jacobian equals 1); \
         enlarge the basis or choose a different reference medium"
    )]
    SingularProjectedJacobian,

    #[error("difference of stable iterates vanished, no direction to grow the basis from")]
    NoGrowthSignal,

    #[error("dense system is singular, estimated null-space dimension {nullity}")]
    SingularSystem { nullity: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
