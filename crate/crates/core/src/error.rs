use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid dimensions {rows}x{cols}: both must be at least 1")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NonSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid query kind for {op}: {kind}")]
    InvalidKind { op: &'static str, kind: String },

    #[error("hadamard query needs M to be a power of two, got {0}")]
    HadamardDimension(usize),

    #[error("unitary query needs T == M, got T={t} M={m}")]
    BlockLength { t: usize, m: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),

    #[error("codebook of size 2^{bits} exceeds the 2^16 enumeration guard")]
    CodebookTooLarge { bits: usize },

    #[error("difference matrix is all zero")]
    ZeroDelta,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("exponent fit needs at least 3 points spanning 10 dB, got {points} points over {span_db} dB")]
    InsufficientPoints { points: usize, span_db: f64 },

    #[error("exponent fit needs positive PEP values, got {value} at {snr_db} dB")]
    NonpositiveValue { snr_db: f64, value: f64 },

    #[error(
        "Monte Carlo average looks divergent: tail index {tail_index:.3} of the high-SNR \
         limit integrand is below {threshold}; a fitted exponent ({measured_exponent:.3}) \
         would not estimate the rank measure"
    )]
    DivergentAverage {
        tail_index: f64,
        threshold: f64,
        measured_exponent: f64,
    },

    #[error("{which} curve never crosses BER {level:e} within its resolved points")]
    LevelNotCrossed { which: &'static str, level: f64 },
}
