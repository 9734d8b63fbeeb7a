//! Error taxonomy. Zero pivots, divergent series, and uncertifiable tails are
//! mathematical signals, not numerical accidents; each carries the index or
//! parameter that triggered it.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MopsError {
    /// Window dimensions incompatible with the requested operation.
    ShapeMismatch {
        context: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// The requested interior exceeds the contamination-free region of a
    /// semi-infinite product, or a factorization is too small for a consumer.
    WindowTooSmall {
        context: &'static str,
        need: usize,
        have: usize,
    },
    /// Weight series fails the ratio test (too many upper parameters, or a
    /// unit-disk argument on or outside the boundary). 1-based weight index.
    DivergentSeries { weight: usize },
    /// A lower Pochhammer factor (c_j)_k hits zero: c_j is a nonpositive integer.
    PochhammerPole { param: String },
    /// The term-ratio certificate never reached its contraction threshold
    /// within the search cap.
    TailNotCertifiable { weight: usize, cap: usize },
    /// A consumer asked for moment orders beyond what the tail certificate protects.
    TailCertificateExceeded { requested: usize, certified: usize },
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    /// tau_n = 0: the leading principal minor of the moment matrix vanishes,
    /// so the weight system is not perfect at this size. Carries n.
    NonPerfectSystem(usize),
    /// Two pipelines that must share a truncation index K do not.
    TruncationMismatch { left: usize, right: usize },
    WrongKind {
        expected: &'static str,
        got: &'static str,
    },
    WrongP { expected: usize, got: usize },
    InvalidParameters { reason: String },
    /// An identity's precondition fails at these parameters (e.g. a vanishing
    /// prefactor); the check is skipped and reported, not failed.
    PreconditionSkipped { what: String },
}

impl fmt::Display for MopsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MopsError::ShapeMismatch { context, left, right } => {
                write!(f, "shape mismatch in {context}: {}x{} vs {}x{}", left.0, left.1, right.0, right.1)
            }
            MopsError::WindowTooSmall { context, need, have } => {
                write!(f, "window too small in {context}: need {need}, have {have}")
            }
            MopsError::DivergentSeries { weight } => {
                write!(f, "weight {weight} series diverges (ratio test)")
            }
            MopsError::PochhammerPole { param } => {
                write!(f, "Pochhammer pole: ({param})_k vanishes for some k")
            }
            MopsError::TailNotCertifiable { weight, cap } => {
                write!(f, "tail certificate for weight {weight} not found below k = {cap}")
            }
            MopsError::TailCertificateExceeded { requested, certified } => {
                write!(f, "moment order {requested} outside certified range {certified}")
            }
            MopsError::IndexOutOfRange { what, index, limit } => {
                write!(f, "{what} index {index} out of range (limit {limit})")
            }
            MopsError::NonPerfectSystem(n) => {
                write!(f, "non-perfect system: tau_{n} = 0")
            }
            MopsError::TruncationMismatch { left, right } => {
                write!(f, "truncation mismatch: K = {left} vs K = {right}")
            }
            MopsError::WrongKind { expected, got } => {
                write!(f, "wrong family kind: expected {expected}, got {got}")
            }
            MopsError::WrongP { expected, got } => {
                write!(f, "wrong number of weights: expected p = {expected}, got p = {got}")
            }
            MopsError::InvalidParameters { reason } => {
                write!(f, "invalid parameters: {reason}")
            }
            MopsError::PreconditionSkipped { what } => {
                write!(f, "precondition not met, check skipped: {what}")
            }
        }
    }
}

impl std::error::Error for MopsError {}
