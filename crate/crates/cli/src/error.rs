use std::path::PathBuf;

use flowtx_core::Error as CoreError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    /// Bad flags or configuration. Also what clap uses for parse failures.
    pub const USAGE: u8 = 2;
    /// Unreadable or invalid input data.
    pub const DATA: u8 = 3;
    /// Checkpoint does not fit the data, or is corrupt or from another format version.
    pub const INCOMPATIBLE: u8 = 4;
    /// Training diverged or produced non-finite scores.
    pub const NUMERIC: u8 = 5;
    /// Filesystem failure.
    pub const IO: u8 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::File { .. } => exit::IO,
            CliError::Core { source, .. } => core_code(source),
        }
    }
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Config(_) => exit::USAGE,
        CoreError::Schema(_)
        | CoreError::Data { .. }
        | CoreError::Dataset(_)
        | CoreError::Csv(_)
        | CoreError::Json(_)
        | CoreError::MetricUndefined(_) => exit::DATA,
        CoreError::Incompatible(_) | CoreError::Integrity(_) | CoreError::Version { .. } => exit::INCOMPATIBLE,
        CoreError::NonFiniteLoss { .. } | CoreError::NonFinite(_) => exit::NUMERIC,
        CoreError::Io(_) => exit::IO,
        CoreError::Shape { .. } | CoreError::Contract(_) => exit::INTERNAL,
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, context: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for Result<T, CoreError> {
    fn context(self, context: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Core { context: context.into(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_per_failure_class() {
        let code = |e: CoreError| CliError::Core { context: String::new(), source: e }.exit_code();
        let codes = [
            CliError::Usage(String::new()).exit_code(),
            code(CoreError::Dataset("x".into())),
            code(CoreError::Incompatible("x".into())),
            code(CoreError::NonFiniteLoss { epoch: 1, batch: 0, value: f64::NAN }),
            code(CoreError::Io(std::io::Error::other("x"))),
        ];
        let mut sorted = codes.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
        assert!(!codes.contains(&exit::OK));
    }
}
