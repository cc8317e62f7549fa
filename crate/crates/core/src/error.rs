use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong in the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error(
        "mean covariance is rank-deficient (eigenvalue ratio {ratio:e}); reduce the basis first"
    )]
    RankDeficientMean { ratio: f64 },

    #[error("every input covariance is rank-deficient; at least one must be full rank")]
    RankDeficientInputs,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("basis reduction required: {0}")]
    BasisReductionRequired(String),

    #[error("geodesic step leaves the covariance cone; admissible |t| <= {max_abs_t:e}")]
    StepOutsideCone { max_abs_t: f64 },

    #[error("sine basis is numerically dependent at term {term}")]
    DegenerateBasis { term: usize },

    #[error("could not draw maps averaging to the identity after {attempts} attempts; try a larger concentration")]
    CannotSymmetrize { attempts: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),
}

impl Error {
    /// Stable name of the variant, used by the CLI in error reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::NotPsd { .. } => "NotPsd",
            Error::RankDeficientMean { .. } => "RankDeficientMean",
            Error::RankDeficientInputs => "RankDeficientInputs",
            Error::InsufficientData(_) => "InsufficientData",
            Error::BasisReductionRequired(_) => "BasisReductionRequired",
            Error::StepOutsideCone { .. } => "StepOutsideCone",
            Error::DegenerateBasis { .. } => "DegenerateBasis",
            Error::CannotSymmetrize { .. } => "CannotSymmetrize",
            Error::Degenerate(_) => "Degenerate",
        }
    }

    /// Whether the error stems from the data rather than from a numerical
    /// breakdown.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DimMismatch { .. }
                | Error::InsufficientData(_)
                | Error::Degenerate(_)
        )
    }
}
