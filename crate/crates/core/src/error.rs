use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge {index} ({u}, {v}) references a node outside 0..{n}")]
    NodeOutOfRange {
        index: usize,
        u: usize,
        v: usize,
        n: usize,
    },

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("matrix has complex eigenvalues (discriminant {0})")]
    ComplexEigenvalues(f64),

    #[error("class {class} has {available} nodes but the split needs {required}")]
    ClassTooSmall {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
