use alloc::string::String;

use crate::model::ValidationReport;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(ValidationReport),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative or non-finite importance score at index {0}")]
    InvalidScore(usize),
    #[error("invalid affinity graph: {0}")]
    InvalidGraph(String),
    #[error("I - rA is singular; the damping factor does not make the series converge")]
    Singular,
    #[error("layer {0} has no weights")]
    NoWeights(usize),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("LRN local size {local_size} is invalid for {channels} channels")]
    LocalSize { local_size: usize, channels: usize },
    #[error("keep count {keep} out of range 1..={len}")]
    KeepOutOfRange { keep: usize, len: usize },
    #[error("importance vector belongs to layer {got}, expected layer {expected}")]
    WrongLayer { expected: usize, got: usize },
    #[error("invalid prune config: {0}")]
    Config(String),
    #[error("invalid importance plan: {0}")]
    Plan(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("sample {0} has no label")]
    Unlabeled(usize),
    #[error("invalid training setup: {0}")]
    Training(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;
