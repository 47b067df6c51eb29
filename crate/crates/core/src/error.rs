use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {dimension} is {actual}, expected {expected}")]
    Shape {
        context: &'static str,
        dimension: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("unknown class id {id} for the {scale} catalog")]
    UnknownClass { scale: &'static str, id: usize },
    #[error("unknown class name {0:?}")]
    UnknownClassName(String),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("backward called on a tape with no recorded forward operations")]
    EmptyTape,
    #[error("loss node must be a scalar, found {channels}x{len}")]
    NonScalarLoss { channels: usize, len: usize },
    #[error("duplicate {kind} id {id:?}")]
    Duplicate { kind: &'static str, id: String },
    #[error("generator spec cannot be realized: {0}")]
    Infeasible(String),
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        dimension: &'static str,
        expected: usize,
        actual: usize,
    ) -> Self {
        Error::Shape {
            context,
            dimension,
            expected,
            actual,
        }
    }
}
