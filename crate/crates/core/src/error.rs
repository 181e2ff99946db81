use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An angle or search coordinate fell outside its open domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimensions of matrices, vectors or configs do not agree.
    #[error("structural error: {0}")]
    Structure(String),

    /// A model type violated one of its invariants.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("non-finite value at sensor {n}, snapshot {t}")]
    NonFinite { n: usize, t: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("weighted Gram matrix is singular at snapshot {t} even after ridge")]
    DegenerateGeometry { t: usize },

    #[error("DOA search failed for source {source_index}: {inner}")]
    Search {
        source_index: usize,
        #[source]
        inner: Box<Error>,
    },

    #[error("iteration {iteration}, {stage}: {inner}")]
    Iteration {
        iteration: usize,
        stage: String,
        #[source]
        inner: Box<Error>,
    },

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::Numeric(_) | Error::DegenerateGeometry { .. } => true,
            Error::Search { inner, .. } | Error::Iteration { inner, .. } => inner.is_numeric(),
            _ => false,
        }
    }
}
