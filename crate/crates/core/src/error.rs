use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BpdError {
    #[error("block size must be at least 1")]
    ZeroBlock,
    #[error("dimension `{0}` must be positive")]
    ZeroDimension(&'static str),
    #[error("index ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("permutation value {value} at block {block} is not below block size {p}")]
    PermOutOfRange { block: usize, value: usize, p: usize },
    #[error("padding slot {0} holds a nonzero value")]
    NonzeroPadding(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, BpdError>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(BpdError::LengthMismatch {
            what,
            expected,
            actual,
        })
    }
}
