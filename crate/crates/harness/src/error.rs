use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Sim(#[from] rvio_sim::SimError),
    #[error("estimation: {0}")]
    Core(#[from] rvio_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("sensor streams changed between runs ({0} vs {1})")]
    StreamMismatch(String, String),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
