use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed record on line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("order {order_id} is attributed to both user {first} and user {second}")]
    DuplicateOrderUser {
        order_id: String,
        first: String,
        second: String,
    },
    #[error("no transaction falls inside the extraction window")]
    EmptyWindow,
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("id spaces are inconsistent: {0}")]
    IdMismatch(String),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("regression needs at least two pairs with nonzero regressor (got n = {n})")]
    InsufficientEvidence { n: usize },
    #[error("user {0} has no purchase history")]
    ColdStartUser(String),
    #[error("order size {size} exceeds assortment size {assortment}")]
    SizeExceedsAssortment { size: u64, assortment: u64 },
    #[error("order has no items")]
    EmptyOrder,
    #[error("no orders to aggregate")]
    NoOrders,
    #[error("shopping-list item {0} is not on the shelf")]
    UnreachableList(String),
    #[error("argument outside the function's domain: {0}")]
    DomainError(String),
    #[error("both samples have zero variance")]
    DegenerateVariance,
    #[error("contingency table has an empty margin")]
    DegenerateMargin,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("split leaves the {0} side empty")]
    EmptySplit(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
