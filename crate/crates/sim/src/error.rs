use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error(
        "PE {pe} weight SRAM overflow: sub-bank {sub_bank} is full \
         ({needed_words} words needed, {capacity_words} available)"
    )]
    WeightCapacity {
        pe: usize,
        sub_bank: usize,
        needed_words: usize,
        capacity_words: usize,
    },
    #[error("PE {pe} permutation SRAM overflow: {needed_rows} rows needed, {capacity_rows} available")]
    PermCapacity {
        pe: usize,
        needed_rows: usize,
        capacity_rows: usize,
    },
    #[error("activation banks hold {capacity} values but the layer needs {needed}")]
    ActivationCapacity { needed: usize, capacity: usize },
    #[error("image and input disagree: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Core(#[from] permdnn_core::BpdError),
}

pub type Result<T> = std::result::Result<T, SimError>;
