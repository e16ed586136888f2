use door_core::DoorError;

/// Everything that can stop a command, classified into exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: column `{column}` has non-numeric value `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: outcome {value} outside 1..={levels}")]
    OutcomeRange { row: usize, value: String, levels: usize },
    #[error("row {row}: treatment must be 0 or 1, got `{value}`")]
    TreatmentValue { row: usize, value: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Door(#[from] DoorError),
}

impl CliError {
    /// 3 for numerical fit failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Door(e) if e.is_fit_failure() => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
