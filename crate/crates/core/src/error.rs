use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("tetrahedron {tet} references node {index}, but only {count} nodes exist")]
    IndexOutOfRange {
        tet: usize,
        index: usize,
        count: usize,
    },

    #[error("tetrahedron {tet} repeats a vertex")]
    RepeatedVertex { tet: usize },

    #[error("tetrahedron {tet} duplicates tetrahedron {first}")]
    DuplicateTet { tet: usize, first: usize },

    #[error("tetrahedron {tet} is degenerate (volume {volume:e})")]
    DegenerateTet { tet: usize, volume: f64 },

    #[error("non-finite coordinate in node {node}")]
    NonFinite { node: usize },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("face {face} is a boundary face")]
    BoundaryFace { face: usize },

    #[error("smoothness r = {r} requires degree d > r (got d = {d})")]
    SmoothnessTooHigh { r: usize, d: usize },

    #[error("directional coordinates must sum to zero (sum = {sum:e})")]
    NotADirection { sum: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain is empty after removing holes")]
    EmptyDomain,

    #[error("hole is not aligned with the cell grid: {0}")]
    HoleNotAligned(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("scenario {scenario}, method {method}, replication {replication}: {source}")]
    Scenario {
        scenario: String,
        method: String,
        replication: usize,
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Scenario { source, .. } => source.is_numerical(),
            e => matches!(e, Error::Singular(_) | Error::Numerical(_)),
        }
    }
}
