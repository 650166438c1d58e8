use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected dims {expected:?}, found {found:?}")]
    GridMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("rater stack must contain at least one mask")]
    EmptyStack,

    #[error("at most {max} raters are supported, got {got}")]
    TooManyRaters { max: usize, got: usize },

    #[error("source mask has no voxel in the requested region")]
    EmptySourceMask,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("candidate has foreground outside the rater union at voxel {voxel}")]
    Support { voxel: usize },

    #[error("budget exceeded: {required} > {allowed} ({what})")]
    BudgetExceeded {
        what: &'static str,
        required: u128,
        allowed: u128,
    },

    #[error("grid extent overflow")]
    Overflow,

    #[error("incompatible configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
