use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] disent_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("line {line}, key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },
    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

impl Error {
    /// Process exit code: 1 for invalid input, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Parse { .. } => 1,
            Error::Core(
                disent_core::Error::Config { .. } | disent_core::Error::Invalid(_) | disent_core::Error::Label { .. },
            ) => 1,
            _ => 2,
        }
    }
}
