//! Exact-arithmetic engine for multiple discrete orthogonal polynomials.
//!
//! Everything downstream of a weight definition is computed over the
//! rationals: moment matrices of truncated measures, their Gauss-Borel
//! factorization, the banded recurrence operators, Pascal-dressed shift
//! operators, Laguerre-Freud structure matrices, contiguity connections,
//! and the Toda-type differential identities in the eta-derivative.
//! Checks either hold literally over Q or are bounded by a certified
//! truncation-tail budget; nothing is ever compared against a float
//! reference.

pub mod contiguity;
pub mod error;
pub mod factorization;
pub mod families;
pub mod moments;
pub mod opsys;
pub mod pearson_lf;
pub mod pipeline;
pub mod recurrence;
pub mod report;
pub mod scalar;
pub mod toda;
pub mod weights;
pub mod window;

pub use error::MopsError;
pub use scalar::{BigFloat, Rat, Scalar, ToleranceBudget};
