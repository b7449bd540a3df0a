use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    /// Kendall's tau of zero has no parameter in the families that exclude
    /// independence; callers substitute the independence copula.
    #[error("tau = 0 maps to the independence copula for {0}")]
    IndependenceTau(&'static str),

    #[error("copula density is undefined for {0}")]
    DensityUndefined(&'static str),

    #[error("degenerate propensity: alpha = {0} must lie strictly inside (0, 1)")]
    DegeneratePropensity(f64),

    #[error("quadrature did not converge (estimated error {error:.3e} after {subdivisions} subdivisions)")]
    QuadratureNonConvergence { error: f64, subdivisions: usize },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schema violation at row {row}: {message}")]
    Schema { row: usize, message: String },

    #[error("learner failure: {0}")]
    Learner(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing nuisance field: {0}")]
    MissingNuisance(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Annotates an error with the fold it arose in, once.
    pub(crate) fn in_fold(self, fold: usize) -> Error {
        match self {
            Error::Fold { .. } => self,
            other => Error::Fold {
                fold,
                source: Box::new(other),
            },
        }
    }
}
