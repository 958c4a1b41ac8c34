use thiserror::Error;

use crate::profiles::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario:\n{0}")]
    InvalidScenario(ValidationReport),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{users} users exceeds the exact-evaluation cap of {cap}; {hint}")]
    Capacity {
        users: usize,
        cap: usize,
        hint: &'static str,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("exact mismatch: {0}")]
    ExactMismatch(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub(crate) fn check_unit_interval(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} = {value} is outside [0, 1]")))
    }
}
