use std::path::PathBuf;

/// Failures of the IO layer. Every variant maps to a stable process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] dsmstcn_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("refusing to overwrite {}", .0.display())]
    Collision(PathBuf),
    #[error("self-check failed: {}", .0.join(", "))]
    SelfcheckFailed(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Validation and configuration problems.
pub const EXIT_INVALID: i32 = 1;
/// Failures while doing the work itself.
pub const EXIT_RUNTIME: i32 = 2;

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(dsmstcn_core::Error::Fold { .. }) | Error::Io { .. } | Error::SelfcheckFailed(_) => EXIT_RUNTIME,
            Error::Core(_) | Error::Parse { .. } | Error::Config(_) | Error::Checkpoint { .. } | Error::Collision(_) => {
                EXIT_INVALID
            }
        }
    }
}
