use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("duplicate vector id `{0}`")]
    DuplicateId(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("rank-deficient covariance, smallest eigenvalue {smallest_eigenvalue:e}")]
    RankDeficient { smallest_eigenvalue: f64 },

    #[error("zero-norm vector `{0}`")]
    ZeroNorm(String),

    #[error("overlapping partition ranges: {0}")]
    OverlappingRanges(String),

    #[error("enumeration cap exceeded: {0}")]
    EnumerationCap(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "enrollment sizes differ ({0:?}) and no exact partition function was supplied; \
         the partition term only cancels at a fixed enrollment size"
    )]
    MixedEnrollmentSizes(Vec<usize>),

    #[error("non-finite gradient at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteGradient {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("labels contain a single class only")]
    SingleClass,

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("trial lists differ: {0}")]
    TrialMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by invalid input rather than by a numerical or
    /// I/O failure during the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::OverlappingRanges(_)
                | Error::InvalidArgument(_)
                | Error::MixedEnrollmentSizes(_)
                | Error::MissingLabels(_)
                | Error::TrialMismatch(_)
                | Error::SingleClass
                | Error::EnumerationCap(_)
        )
    }
}
