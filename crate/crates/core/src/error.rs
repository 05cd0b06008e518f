use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("{op}: reduction over an empty axis")]
    EmptyAxis { op: &'static str },
    #[error("attention over an empty key-value set")]
    EmptyKeyValueSet,
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("weight-space spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("invalid weight-space spec: {0}")]
    InvalidSpec(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("spec too small for {kind}: {requirement}")]
    SpecTooSmall {
        kind: &'static str,
        requirement: &'static str,
    },
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("exact all-pairs attention needs dim(U) <= {limit}, got {dim}")]
    ExactTermTooLarge { dim: usize, limit: usize },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical divergence: {0}")]
    Diverged(String),
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
