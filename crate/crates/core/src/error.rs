use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{context}: expected shape {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("{context}: non-finite values")]
    NonFinite { context: &'static str },
    #[error("{context}: values outside [-1, 1]")]
    OutOfRange { context: &'static str },
    #[error("domain label {label} out of range for {num_domains} domains")]
    Label { label: usize, num_domains: usize },
    #[error("training diverged at step {step}: `{term}` is not finite")]
    Divergence { step: u64, term: &'static str },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("need at least {needed} items, got {got}")]
    Arity { needed: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
