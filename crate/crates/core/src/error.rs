use alloc::boxed::Box;
use alloc::string::String;

use crate::cmd::CmdParams;

/// Errors raised by the detection and training primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unsupported modulation `{0}`")]
    UnsupportedModulation(String),
    #[error("invalid channel configuration: {0}")]
    InvalidChannel(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point on the simplex boundary (entry {0:e} <= 1e-12)")]
    SimplexBoundary(f64),
    #[error("binary mode requires a two-level constellation, got K = {0}")]
    ModeMismatch(usize),
    #[error("exhaustive search over {size} hypotheses exceeds the limit of {limit}")]
    SearchTooLarge { size: u128, limit: u128 },
    #[error("non-finite loss at training iteration {iteration}")]
    NonFiniteLoss {
        iteration: usize,
        snapshot: Box<CmdParams>,
    },
    #[error("singular system matrix")]
    Singular,
}

pub type Result<T> = core::result::Result<T, Error>;
