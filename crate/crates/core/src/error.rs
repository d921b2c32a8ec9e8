use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("column {0} is constant")]
    ConstantColumn(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design restricted to the support is rank deficient")]
    RankDeficient,

    #[error("support of size {size} exceeds the limit of {limit}")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("{count} thresholded coefficients survive, at most {limit} can be refitted")]
    TooManySurvivors { count: usize, limit: usize },

    #[error("no estimates supplied")]
    EmptyList,

    #[error("dataset is not standardized")]
    NotStandardized,

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("residual sum of squares is degenerate (perfect fit)")]
    DegenerateSse,

    #[error("every path point exceeds the model size limit {k_n}")]
    AllExcluded { k_n: usize },

    #[error("logistic weights collapsed, data are (quasi-)separated")]
    Separation,

    #[error("brute-force enumeration needs p <= {cap}, got p = {p}")]
    TooLargeForBruteForce { p: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),
}
