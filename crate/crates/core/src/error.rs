use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex {vertex} out of range for a field with {num_vertices} vertices")]
    VertexOutOfRange { vertex: usize, num_vertices: usize },

    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),

    #[error("graph is disconnected: vertex {0} is unreachable from vertex 0")]
    Disconnected(usize),

    #[error("empty vertex set where a non-empty one is required ({0})")]
    EmptySet(&'static str),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("non-positive kernel entry {value} in {table} table at site {site}")]
    NonPositiveKernel {
        table: &'static str,
        site: usize,
        value: f64,
    },

    #[error("joint state space of {states} configurations exceeds the cap of {cap}")]
    CapExceeded { states: u128, cap: u128 },

    #[error("normalizing constant is zero or not finite")]
    ZeroNormalizer,

    #[error("all particle weights underflowed in block {block} at step {step}")]
    WeightUnderflow { step: usize, block: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
