use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward already ran on this graph; call zero_grad before running it again")]
    AlreadyBackpropagated,

    #[error("non-finite loss at perturbed parameter {param}[{index}]")]
    NonFiniteProbe { param: usize, index: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("ratio undefined: static final loss is {0}")]
    UndefinedRatio(f64),

    #[error("power-law fit unavailable: {usable} usable rows, need at least 3")]
    FitUnavailable { usable: usize },

    #[error("all {0} trials diverged")]
    AllTrialsDiverged(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
