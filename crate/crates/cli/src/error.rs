use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input file {} not found", .0.display())]
    InputNotFound(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] voxelzip::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(voxelzip::Error::Io(e))
    }
}

/// Process exit code for every error token. Zero means success.
pub const EXIT_CODES: [(&str, i32); 21] = [
    ("InputNotFound", 2),
    ("UsageError", 3),
    ("InvalidDims", 10),
    ("DimensionTooSmall", 11),
    ("DimensionMismatch", 12),
    ("IndexOutOfRange", 13),
    ("NonMonotonicIndices", 14),
    ("NonFiniteInput", 15),
    ("UnsupportedDegree", 16),
    ("EmptyGrid", 17),
    ("NoCameras", 18),
    ("InvalidConfig", 19),
    ("NonFiniteLoss", 20),
    ("GridTooLargeForOracle", 21),
    ("BadMagic", 22),
    ("UnsupportedVersion", 23),
    ("ChecksumMismatch", 24),
    ("TruncatedSection", 25),
    ("MalformedSection", 26),
    ("AlreadyHasNcb", 27),
    ("IoFailure", 28),
];

impl CliError {
    pub fn token(&self) -> &'static str {
        match self {
            CliError::InputNotFound(_) => "InputNotFound",
            CliError::Usage(_) => "UsageError",
            CliError::Core(e) => e.token(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        let token = self.token();
        EXIT_CODES
            .iter()
            .find(|(t, _)| *t == token)
            .map_or(1, |&(_, code)| code)
    }
}
