use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// A config problem, with the 1-based line of the offending key when it
    /// can be located.
    #[error("{}", render_config(.path, *.line, .message))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] myula::Error),

    #[error("output {path} changed since the previous run (manifest hash mismatch)")]
    Determinism { path: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn render_config(path: &std::path::Path, line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("{}:{l}: {message}", path.display()),
        None => format!("{}: {message}", path.display()),
    }
}

impl CliError {
    /// 0 success, 2 config, 3 numerical, 4 estimator undefined, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(myula::Error::Config(_) | myula::Error::Input(_)) => 2,
            CliError::Core(myula::Error::Numerical { .. }) => 3,
            CliError::Core(myula::Error::EstimatorUndefined(_)) => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let cfg = CliError::Config {
            path: "a.toml".into(),
            line: Some(3),
            message: "bad".into(),
        };
        assert_eq!(cfg.exit_code(), 2);
        assert_eq!(cfg.to_string(), "a.toml:3: bad");
        let num = CliError::Core(myula::Error::Numerical {
            iteration: 1,
            message: "x".into(),
            last_state: None,
        });
        assert_eq!(num.exit_code(), 3);
        assert_eq!(
            CliError::Core(myula::Error::EstimatorUndefined("e".into())).exit_code(),
            4
        );
        assert_eq!(CliError::Determinism { path: "p".into() }.exit_code(), 1);
    }
}
