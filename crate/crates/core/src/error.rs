use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is outside the domain of the operation.
    #[error("invalid input: {0}")]
    Input(String),

    /// Inconsistent model, sampler or transform configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iteration produced a non-finite value. `last_state` holds the last
    /// finite iterate when one is available.
    #[error("numerical error at iteration {iteration}: {message}")]
    Numerical {
        iteration: usize,
        message: String,
        last_state: Option<Vec<f64>>,
    },

    /// The truncated harmonic-mean estimator saw no samples in its region.
    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(iteration: usize, message: impl Into<String>) -> Self {
        Error::Numerical {
            iteration,
            message: message.into(),
            last_state: None,
        }
    }
}

pub(crate) fn ensure_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} contains non-finite entries")))
    }
}
