use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("memory cap exceeded: {what} needs {required} entries, cap is {cap}")]
    MemoryCap {
        what: String,
        required: u128,
        cap: u128,
    },

    #[error("invalid k-point: {0}")]
    InvalidKPoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient unavailable: index {m} exceeds provider limit {max}")]
    CoefficientUnavailable { m: usize, max: usize },

    #[error("capability unsupported by provider '{provider}': {capability}")]
    Unsupported {
        provider: String,
        capability: String,
    },

    #[error("singular quantity: {0}")]
    Singular(String),

    #[error("bisection bracket failure on [{lo}, {hi}]: F(lo) = {f_lo}, F(hi) = {f_hi}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("ratio undefined: f_{j}(k) vanishes at k-index {k_index}")]
    RatioUndefined { j: usize, k_index: usize },

    #[error("identity violation in {identity}: residual {residual:e} at n = {n}")]
    IdentityViolation {
        identity: String,
        n: usize,
        residual: f64,
    },

    #[error("no convolution regime applies for a = {a}, b = {b}")]
    RegimeRejected { a: f64, b: f64 },

    #[error("invalid probability: z * D(x) = {value} exceeds 1")]
    InvalidProbability { value: f64 },

    #[error("enumeration budget exceeded: estimated {estimate} walks, budget {budget}")]
    Budget { estimate: u128, budget: u128 },

    #[error("exact arithmetic overflow: {0}")]
    Overflow(String),

    #[error("window too small: need radius {required}, table has {available}")]
    Window { required: i64, available: i64 },

    #[error("unsupported dimension {d}: {reason}")]
    UnsupportedDimension { d: usize, reason: String },

    #[error("config error for key '{key}': {message}")]
    Config { key: String, message: String },

    #[error("cache error: {0}")]
    Cache(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
