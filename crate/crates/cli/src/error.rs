use std::path::Path;

use surrosens_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn reading(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    pub fn writing(path: &Path, err: std::io::Error) -> Self {
        CliError::Config(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let message = err.to_string();
        match err {
            CoreError::InvalidConfig(_)
            | CoreError::ParameterOutOfRange(_)
            | CoreError::IndependenceTau(_)
            | CoreError::DensityUndefined(_)
            | CoreError::Json(_) => CliError::Config(message),
            CoreError::Schema { .. } | CoreError::Csv(_) | CoreError::Io(_) => CliError::Data(message),
            CoreError::DegeneratePropensity(_)
            | CoreError::QuadratureNonConvergence { .. }
            | CoreError::RootFinding(_)
            | CoreError::Learner(_)
            | CoreError::Fold { .. }
            | CoreError::MissingNuisance(_)
            | CoreError::Numerical(_) => CliError::Numerical(message),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
