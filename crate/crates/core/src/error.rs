use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// A caller-supplied map returned a non-finite value or the wrong
    /// number of components.
    #[error("evaluation of {function} failed at {point:?}{}", index.map(|i| format!(" (step {i})")).unwrap_or_default())]
    Evaluation {
        function: &'static str,
        point: Vec<f64>,
        index: Option<usize>,
    },

    #[error("out of domain: {0}")]
    Domain(String),

    #[error("tail has {available} elements but at least {required} are needed; use a longer orbit")]
    TailTooShort { available: usize, required: usize },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Evaluation {
                function, point, ..
            } => Error::Evaluation {
                function,
                point,
                index: Some(step),
            },
            other => other,
        }
    }
}
