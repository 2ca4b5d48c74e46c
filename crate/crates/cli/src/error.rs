use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Lib(#[from] combolab::Error),

    #[error("gradient check failed: `{component}` has relative error {error:.3e} (tolerance {tolerance:.1e})")]
    GradcheckFailed {
        component: String,
        error: f64,
        tolerance: f64,
    },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    /// 2 usage, 3 data or format, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use combolab::Error as E;
        match self {
            CliError::Usage(_) | CliError::Lib(E::Config(_)) => 2,
            CliError::Lib(E::Numeric { .. } | E::Domain(_)) | CliError::GradcheckFailed { .. } => 4,
            CliError::Lib(_) => 3,
        }
    }
}
