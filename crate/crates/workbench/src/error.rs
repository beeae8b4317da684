use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl WorkbenchError {
    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            WorkbenchError::Config(_) => 2,
            WorkbenchError::Numerical(_) => 3,
            WorkbenchError::Io(_) => 1,
        }
    }
}

impl From<spinlind::Error> for WorkbenchError {
    fn from(e: spinlind::Error) -> Self {
        use spinlind::Error as E;
        match e {
            E::InvalidSpin(_)
            | E::InvalidParameter { .. }
            | E::CapExceeded { .. }
            | E::InvalidTimeGrid(_)
            | E::SectorOutOfRange { .. }
            | E::MissingParity
            | E::InsufficientData { .. }
            | E::ExceptionalPoint(_) => WorkbenchError::Config(e.to_string()),
            _ => WorkbenchError::Numerical(e.to_string()),
        }
    }
}
