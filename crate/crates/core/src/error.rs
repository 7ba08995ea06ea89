use alloc::string::String;

use crate::GroupId;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("mask is all foreground or all background")]
    DegenerateMask,
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("dimension mismatch for `{id}`: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        id: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("group {0} already carries injected bias")]
    AlreadyBiased(GroupId),
    #[error("no FiLM entry for group {0}")]
    UnknownGroup(GroupId),
    #[error("every pixel has zero loss weight")]
    AllMaskedOut,
    #[error("fold {fold} is degenerate: {reason}")]
    FoldDegenerate { fold: usize, reason: String },
    #[error("no observed pixels of class {0}")]
    EmptyClass(u8),
    #[error("contingency table has a zero expected count")]
    ExpectedZero,
    #[error("no omission or commission errors in either group")]
    NoErrors,
    #[error("group {0} has fewer than two members")]
    GroupTooSmall(GroupId),
    #[error("sample `{0}` is corrupted but has no clean mask")]
    MissingCleanMask(String),
    #[error("need at least {needed} pixels, got {got}")]
    TooFewPixels { needed: usize, got: usize },
    #[error("ITA is undefined for b* = 0 and L* = 50")]
    UndefinedIta,
}

pub type Result<T> = core::result::Result<T, Error>;
