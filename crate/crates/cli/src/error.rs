use std::io;
use std::path::PathBuf;

use contraction_lab::coupling::CouplingError;
use contraction_lab::harness::HarnessError;
use contraction_lab::model::ModelError;
use contraction_lab::ot::OtError;
use contraction_lab::theory::TheoryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration; `pointer` is a JSON pointer into the scenario file.
    #[error("config error at {}: {message}", if pointer.is_empty() { "/" } else { pointer.as_str() })]
    Config { pointer: String, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Harness(HarnessError),
    #[error(transparent)]
    Theory(TheoryError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Coupling(CouplingError),
}

impl CliError {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

// Model errors carry pointers relative to the `model` section.
impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config { pointer, message } => CliError::config(format!("/model{pointer}"), message),
            e => CliError::Model(e),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config { pointer, message } => CliError::config(pointer, message),
            HarnessError::Model(m) => m.into(),
            HarnessError::Theory(t) => t.into(),
            HarnessError::Coupling(c) => c.into(),
            e => CliError::Harness(e),
        }
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        CliError::Theory(e)
    }
}

impl From<CouplingError> for CliError {
    fn from(e: CouplingError) -> Self {
        match e {
            CouplingError::InvalidGrid(m) => CliError::config("/grid", m),
            CouplingError::InvalidKind(m) => CliError::config("/coupling", m),
            e => CliError::Coupling(e),
        }
    }
}
