use thiserror::Error;

/// Errors raised by the library. Each variant names the violated condition.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid step distribution: {0}")]
    InvalidStepDistribution(String),
    #[error("torus side {side} too small for step range {range}")]
    TorusTooSmall { side: usize, range: usize },
    #[error("field size mismatch: expected {expected} sites, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("operator not positive at p = ({p1}, {p2}): value {value}")]
    NotPositive { p1: f64, p2: f64, value: f64 },
    #[error("field has nonzero mean {0} but the zero mode is excluded")]
    NonzeroMean(f64),
    #[error("negative covariance piece {piece} at mode {mode}: {value}")]
    NegativePiece {
        piece: usize,
        mode: usize,
        value: f64,
    },
    #[error("scale {scale} out of range (N = {scales})")]
    ScaleOutOfRange { scale: u32, scales: u32 },
    #[error("base {base} is not an exact {power}-th power")]
    NotAPower { base: usize, power: u32 },
    #[error("quadrature error estimate {estimate} exceeds tolerance {tolerance}")]
    Quadrature { estimate: f64, tolerance: f64 },
    #[error("support does not fit the torus: {0}")]
    SupportTooLarge(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("activity is not periodic: endpoint mismatch {0}")]
    NotPeriodic(f64),
    #[error("enumeration budget exceeded: {count} blocks (limit {limit})")]
    Budget { count: usize, limit: usize },
    #[error("expectation functional rejected: {0}")]
    Expectation(String),
    #[error("sampler diagnostic failed: {0}")]
    Diagnostic(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code used by the CLI and the C interface.
    pub fn code(&self) -> i32 {
        match self {
            Error::InvalidLattice(_) => 10,
            Error::InvalidStepDistribution(_) => 11,
            Error::TorusTooSmall { .. } => 12,
            Error::SizeMismatch { .. } => 13,
            Error::NotPositive { .. } => 20,
            Error::NonzeroMean(_) => 21,
            Error::NegativePiece { .. } => 22,
            Error::ScaleOutOfRange { .. } => 23,
            Error::NotAPower { .. } => 24,
            Error::Quadrature { .. } => 25,
            Error::SupportTooLarge(_) => 30,
            Error::Precondition(_) => 31,
            Error::NotPeriodic(_) => 40,
            Error::Budget { .. } => 41,
            Error::Expectation(_) => 42,
            Error::Diagnostic(_) => 50,
            Error::Config(_) => 60,
            Error::Io(_) => 70,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLattice(_) => "invalid_lattice",
            Error::InvalidStepDistribution(_) => "invalid_step_distribution",
            Error::TorusTooSmall { .. } => "torus_too_small",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::NotPositive { .. } => "not_positive",
            Error::NonzeroMean(_) => "nonzero_mean",
            Error::NegativePiece { .. } => "negative_piece",
            Error::ScaleOutOfRange { .. } => "scale_out_of_range",
            Error::NotAPower { .. } => "not_a_power",
            Error::Quadrature { .. } => "quadrature",
            Error::SupportTooLarge(_) => "support_too_large",
            Error::Precondition(_) => "precondition",
            Error::NotPeriodic(_) => "not_periodic",
            Error::Budget { .. } => "budget",
            Error::Expectation(_) => "expectation",
            Error::Diagnostic(_) => "diagnostic",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
