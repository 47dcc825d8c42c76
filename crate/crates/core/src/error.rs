use thiserror::Error;

/// Errors raised by the solver.
///
/// Variants map onto the three failure classes the CLI exposes as exit
/// codes: configuration problems, numeric failures and API misuse.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("non-finite value in layer {layer}{}", fmt_point(.point))]
    NonFinite { layer: usize, point: Option<Vec<f64>> },

    #[error("division by zero{}", fmt_point(.point))]
    DivideByZero { point: Option<Vec<f64>> },

    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged { iteration: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("usage error: {0}")]
    Usage(String),
}

fn fmt_point(point: &Option<Vec<f64>>) -> String {
    match point {
        Some(p) => format!(" at point {p:?}"),
        None => String::new(),
    }
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    /// True for failures caused by the numbers themselves rather than by
    /// the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::DivideByZero { .. } | Error::Diverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
