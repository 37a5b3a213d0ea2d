//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A signal description violates an invariant (empty component list,
    /// frequency outside the band, non-positive amplitude, ...).
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    /// A channel description violates an invariant (zero factor, zero start
    /// index, zero requested length).
    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    /// A sequence is too short for the requested operation.
    #[error("sequence of {len} samples is too short, need at least {needed}")]
    SequenceTooShort { len: usize, needed: usize },

    /// A snapshot window length is unusable for the requested operation.
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    /// The model order does not fit the window length.
    #[error("model order {k} does not fit window of {n} samples")]
    ModelOrder { k: usize, n: usize },

    /// Two undersampling factors share a common divisor.
    #[error("factors {a} and {b} are not coprime")]
    NotCoprime { a: u32, b: u32 },

    /// Two inputs disagree on the underlying band edge `f_h`.
    #[error("band mismatch: expected f_h = {expected} Hz, got {got} Hz")]
    BandMismatch { expected: f64, got: f64 },

    /// A folded frequency lies outside `[0, f_h / factor)`.
    #[error("folded frequency {value} Hz outside [0, {limit} Hz)")]
    FoldedOutOfRange { value: f64, limit: f64 },

    /// Two frequency lists that must be paired have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// An eigenvalue or singular value decomposition failed to converge.
    #[error("eigendecomposition failed: {0}")]
    Eigendecomposition(String),

    /// A frequency pair is ambiguous on every channel pair at once, which a
    /// pairwise coprime factor triple can never produce for in-band tones.
    #[error("frequencies {0} and {1} conflict on all three channel pairs")]
    AmbiguityContradiction(usize, usize),

    /// An experiment configuration is unusable.
    #[error("invalid configuration: {0}")]
    Config(String),
}
