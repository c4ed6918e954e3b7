use thiserror::Error;

/// Errors raised by the simulator stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported constellation order {0}; expected one of 4, 16, 64, 256, 324, 400, 484, 576, 1024")]
    UnsupportedOrder(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("target entropy {target} bits outside ({min}, {max}]")]
    EntropyOutOfRange { target: f64, min: f64, max: f64 },
    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("sequence does not match the composition")]
    CompositionMismatch,
    #[error("symbol index {index} out of range for a {order}-point constellation")]
    IndexOutOfRange { index: usize, order: usize },
    #[error("adaptive filter diverged: MSE rose from {from:.3e} to {to:.3e}")]
    Diverged { from: f64, to: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("no finite optimum: {0}")]
    NoOptimum(&'static str),
    #[error("alignment failure: AIR {air:.3} bits is below half the entropy {entropy:.3} on a clean channel")]
    Misaligned { air: f64, entropy: f64 },
    #[error("trellis with {states} states requires the large-trellis flag")]
    TrellisTooLarge { states: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
