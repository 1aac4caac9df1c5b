use thiserror::Error;

/// Errors raised by the toolkit.
///
/// `Validation` and `Numerical` map onto the CLI exit codes 2 and 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),
    #[error("aliasing: {0}")]
    Aliasing(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular sample at grid point {index:?}")]
    SingularSample { index: Vec<usize> },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical quality: {0}")]
    Numerical(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::DegenerateLattice(_)
                | Error::Shape(_)
                | Error::SingularSample { .. }
                | Error::Parameter(_)
                | Error::Aliasing(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
