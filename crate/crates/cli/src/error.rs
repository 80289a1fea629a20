use std::fmt;

use ulamchain::absorb::AbsorbError;
use ulamchain::{BayesError, SpectralError};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    pub fn numerical(error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            error: error.into(),
        }
    }
}

/// Non-convergence and other numerical failures raised by the CLI itself.
#[derive(Debug)]
pub struct Numerical(pub String);

impl fmt::Display for Numerical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

fn is_numerical(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Numerical>()
            || matches!(c.downcast_ref::<BayesError>(), Some(BayesError::ZeroEvidence | BayesError::DecreasingCdf { .. }))
            || matches!(
                c.downcast_ref::<AbsorbError>(),
                Some(AbsorbError::RowSum { .. } | AbsorbError::NotConverged(_))
            )
            || matches!(c.downcast_ref::<SpectralError>(), Some(SpectralError::ZeroRestriction))
    })
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        let code = if is_numerical(&error) { EXIT_NUMERICAL } else { EXIT_INPUT };
        CliError { code, error }
    }
}

/// `?`-friendly conversion for core error types.
pub trait Context<T> {
    fn ctx(self, what: impl fmt::Display) -> Result<T, CliError>;
}

impl<T, E> Context<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn ctx(self, what: impl fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::from(anyhow::Error::new(e).context(what.to_string())))
    }
}
