use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("row {row} has non-positive sum {sum}")]
    DegenerateRow { row: usize, sum: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("row {row} of the target distribution is all zero")]
    DegenerateAssignment { row: usize },

    #[error("trace does not match the network: {0}")]
    TraceMismatch(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("format error at row {row}, column {col}: {msg}")]
    Table { row: usize, col: usize, msg: String },

    #[error("non-finite loss at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape {
            op,
            left: format!("{}x{}", left.0, left.1),
            right: format!("{}x{}", right.0, right.1),
        }
    }

    pub(crate) fn len(op: &'static str, left: usize, right: usize) -> Self {
        Error::Shape {
            op,
            left: format!("len {left}"),
            right: format!("len {right}"),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
