use maghelm_core::MaghelmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Core(MaghelmError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown format `{0}`")]
    UnknownFormat(String),
}

impl From<MaghelmError> for CliError {
    fn from(e: MaghelmError) -> Self {
        match e {
            MaghelmError::EmptyGrid => CliError::EmptyGrid,
            other => CliError::Core(other),
        }
    }
}
