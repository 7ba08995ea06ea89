use std::path::{Path, PathBuf};

/// Errors of the file formats, configuration and pipeline layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}{}: {message}", path.display(), entry.as_ref().map(|e| format!(" (entry `{e}`)")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        entry: Option<String>,
        message: String,
    },
    #[error("{module}{}: {source}", sample.as_ref().map(|s| format!(" (sample `{s}`)")).unwrap_or_default())]
    Core {
        module: &'static str,
        sample: Option<String>,
        source: segbias_core::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, entry: Option<&str>, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.as_ref().to_path_buf(),
            entry: entry.map(String::from),
            message: message.into(),
        }
    }

    /// Process exit status: 2 for bad input or configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) | Self::Parse { .. } => 2,
            Self::Core { source, .. } => match source {
                segbias_core::Error::Config(_)
                | segbias_core::Error::DimensionMismatch { .. }
                | segbias_core::Error::InvalidMask(_)
                | segbias_core::Error::MissingCleanMask(_)
                | segbias_core::Error::AlreadyBiased(_) => 2,
                _ => 1,
            },
            Self::Io { .. } => 1,
        }
    }
}

/// Tags core errors with the module that raised them.
pub(crate) trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T>;
    fn for_sample(self, module: &'static str, sample: &str) -> Result<T>;
}

impl<T> InModule<T> for segbias_core::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T> {
        self.map_err(|source| Error::Core {
            module,
            sample: None,
            source,
        })
    }

    fn for_sample(self, module: &'static str, sample: &str) -> Result<T> {
        self.map_err(|source| Error::Core {
            module,
            sample: Some(sample.into()),
            source,
        })
    }
}
