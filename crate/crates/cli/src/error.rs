use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl From<aggrex_core::Error> for CliError {
    fn from(e: aggrex_core::Error) -> Self {
        use aggrex_core::Error as E;
        match e {
            E::InvalidInput(_) | E::DimensionMismatch { .. } | E::Parse { .. } | E::EmptyData(_) => {
                CliError::Input(e.to_string())
            }
            E::Infeasible(_)
            | E::NotDifferentiable { .. }
            | E::Numeric(_)
            | E::DegenerateFit(_)
            | E::Internal(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
