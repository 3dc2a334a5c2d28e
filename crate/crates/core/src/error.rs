use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stencil size {n} exceeds node count {nodes}")]
    StencilTooLarge { n: usize, nodes: usize },

    #[error("singular local system at node {node} (pivot ratio {ratio:.3e})")]
    SingularStencil { node: usize, ratio: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("evolution system factorisation failed (dt = {dt}, n = {n}, nnz = {nnz}): {reason}")]
    Factorisation {
        dt: f64,
        n: usize,
        nnz: usize,
        reason: String,
    },

    #[error("dense eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("matrix of dimension {n} exceeds the dense cap {cap}")]
    TooLargeForDense { n: usize, cap: usize },

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("zero reference norm")]
    ZeroReference,

    #[error("no stable hyperviscosity constant found up to c = {c_max}")]
    NoStableC { c_max: f64 },

    #[error("solution diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
