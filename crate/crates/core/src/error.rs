use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Required column absent from a CSV header.
    #[error("schema error: missing column `{0}`")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Structurally invalid input data (duplicates, missing samples, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("covariate encoding error: {0}")]
    Encoding(String),

    #[error("time {time} outside domain [{lo}, {hi}]")]
    Domain { time: f64, lo: f64, hi: f64 },

    #[error("ill-conditioned smoothing system: {0}")]
    Conditioning(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("need at least {needed} samples, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("semantics error: {0}")]
    Semantics(String),

    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_node(self, node: usize) -> Self {
        Error::Node {
            node,
            source: Box::new(self),
        }
    }
}
