use thiserror::Error;

/// Failure modes of the acquisition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Structurally invalid configuration (unknown node, non-integral grid, ...).
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A value outside its documented domain.
    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("failed to parse configuration at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Wire(#[from] WireError),

    #[error(transparent)]
    Fusion(#[from] FusionError),

    #[error("decode error: {0}")]
    Decode(String),

    /// The configured channel count exceeds the swarm's unambiguous span.
    #[error("ambiguous codebook: {q_total} channels requested but the unambiguous span covers {span_channels}")]
    Ambiguity { q_total: usize, span_channels: u64 },

    /// A metric was requested over an empty sample.
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Report wire-format decoding failures. Each corruption class has its own kind.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {found:02x?}, expected \"SCFT\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated report: needed {needed} bytes, got {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bin indices not strictly increasing at position {position}")]
    NonIncreasingBins { position: usize },
    #[error("bin {bin} out of range for {m_points}-point spectrum")]
    BinOutOfRange { bin: u32, m_points: u32 },
    #[error("{0} trailing bytes after report")]
    TrailingBytes(usize),
    #[error("amplitude block holds {found} values, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FusionError {
    #[error("no report from node {0}")]
    MissingNode(u16),
    #[error("more than one report from node {0}")]
    DuplicateNode(u16),
    #[error("report from node {0}, which is not in the codebook")]
    UnknownNode(u16),
    #[error("node {node_id} reports {found} snapshots, expected {expected}")]
    SnapshotMismatch {
        node_id: u16,
        expected: u32,
        found: u32,
    },
    #[error("node {node_id} grid mismatch: {message}")]
    GridMismatch { node_id: u16, message: String },
    #[error("no reports to fuse")]
    Empty,
}

pub type Result<T> = std::result::Result<T, Error>;
