use stabfield::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Process exit code: 2 validation, 3 certification, 4 numeric, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::Parameter(_) | CoreError::Contract(_) | CoreError::Parse { .. } => 2,
                CoreError::Certification { .. } | CoreError::InsufficientPoints { .. } | CoreError::PatchTooSmall { .. } => 3,
                CoreError::Numeric(_) | CoreError::DegenerateFit(_) => 4,
                CoreError::Io(_) => 1,
            },
        }
    }

    /// Machine-readable error code written to the report.
    pub fn code(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            3 => "certification",
            4 => "numeric",
            _ => "io",
        }
    }
}
