use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
///
/// Every variant has a stable machine-readable token (see [`Error::token`])
/// which the command-line front end prints and maps to an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimensions: {0}")]
    InvalidDims(String),
    #[error("destination dimension {dim} is smaller than 2 along axis {axis}")]
    DimensionTooSmall { axis: usize, dim: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("voxel index {index} is out of range for {len} voxels")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("voxel indices must be strictly increasing (position {position})")]
    NonMonotonicIndices { position: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(String),
    #[error("unsupported spherical-harmonics layout with {coeffs} coefficients")]
    UnsupportedDegree { coeffs: usize },
    #[error("grid has no occupied voxels")]
    EmptyGrid,
    #[error("at least one camera is required")]
    NoCameras,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("grid with {voxels} voxels is too large for the brute-force oracle (max {max})")]
    GridTooLargeForOracle { voxels: usize, max: usize },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: [u8; 4] },
    #[error("unsupported format version {version}")]
    UnsupportedVersion { version: u32 },
    #[error("checksum mismatch in section {section}")]
    ChecksumMismatch { section: String },
    #[error("section {section} is truncated")]
    TruncatedSection { section: String },
    #[error("malformed section {section}: {reason}")]
    MalformedSection { section: String, reason: String },
    #[error("container already carries a neural codebook")]
    AlreadyHasNcb,
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable token naming the error kind.
    pub fn token(&self) -> &'static str {
        match self {
            Error::InvalidDims(_) => "InvalidDims",
            Error::DimensionTooSmall { .. } => "DimensionTooSmall",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::NonMonotonicIndices { .. } => "NonMonotonicIndices",
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::UnsupportedDegree { .. } => "UnsupportedDegree",
            Error::EmptyGrid => "EmptyGrid",
            Error::NoCameras => "NoCameras",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::GridTooLargeForOracle { .. } => "GridTooLargeForOracle",
            Error::BadMagic { .. } => "BadMagic",
            Error::UnsupportedVersion { .. } => "UnsupportedVersion",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::TruncatedSection { .. } => "TruncatedSection",
            Error::MalformedSection { .. } => "MalformedSection",
            Error::AlreadyHasNcb => "AlreadyHasNcb",
            Error::Io(_) => "IoFailure",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
