//! Error taxonomy shared by every module.
//!
//! Each variant renders as a single line whose first token is the variant
//! name, so callers (and the CLI) can match on errors textually as well as
//! structurally. Diagnostic payloads are plain `f64` regardless of the
//! scalar type the computation ran with.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of channel validation, estimation, region computation,
/// code construction and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A kernel or state-distribution row does not sum to one within the
    /// scalar's probability tolerance.
    #[error("NonStochasticRow x={x:?} s={s:?} sum={sum:.17}")]
    NonStochasticRow {
        x: Vec<usize>,
        s: Vec<usize>,
        sum: f64,
    },

    /// A probability or distortion entry is negative.
    #[error("NegativeEntry table={table} index={index:?} value={value:.17}")]
    NegativeEntry {
        table: &'static str,
        index: Vec<usize>,
        value: f64,
    },

    /// A container has the wrong shape for the declared alphabets.
    #[error("DimensionMismatch what={what} expected={expected} got={got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    /// A symbol, state or identity index is outside its declared range.
    #[error("IndexOutOfAlphabet axis={axis} index={index} size={size}")]
    IndexOutOfAlphabet {
        axis: String,
        index: usize,
        size: usize,
    },

    /// A posterior was requested at an input/output pair that has zero
    /// probability under the evaluation model.
    #[error("UndefinedConditional sender={sender} x={x} y={y}")]
    UndefinedConditional { sender: usize, x: usize, y: usize },

    /// No admissible input meets the distortion budget, or the budget itself
    /// is invalid (a negative entry).
    #[error("InfeasibleDistortion budget={budget:?}")]
    InfeasibleDistortion { budget: Vec<f64> },

    /// The greedy code construction stalled before reaching the requested
    /// number of color codewords.
    #[error(
        "CodePackingFailure packed={packed} requested={requested} \
         block_len={block_len} max_error={max_error}; \
         use a longer block or fewer colors"
    )]
    CodePackingFailure {
        packed: usize,
        requested: usize,
        block_len: usize,
        max_error: f64,
    },

    /// A sequence argument has the wrong length.
    #[error("LengthMismatch what={what} expected={expected} got={got}")]
    LengthMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    /// A scalar parameter is outside its documented domain.
    #[error("InvalidParameter {0}")]
    InvalidParameter(String),

    /// An exact computation would need to enumerate more states than the
    /// desk-scale guard allows.
    #[error("TooLarge what={what} size={size} limit={limit}")]
    TooLarge {
        what: String,
        size: u128,
        limit: u128,
    },

    /// A serialized channel or code could not be parsed.
    #[error("Parse {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
