//! Floating scalar abstraction and small entropy helpers.
//!
//! Every numeric routine in this crate is generic over [`Real`], implemented
//! for `f64` and `f32`. Tolerances scale with the precision of the type; the
//! values documented elsewhere (`1e-12` for probability sums, `1e-9` for
//! budget comparisons) are the `f64` ones.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating scalar the crate computes with.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tolerance for checking that a probability vector sums to one.
    fn prob_tol() -> Self;

    /// Slack allowed when comparing a distortion against a budget, and the
    /// default convergence threshold of the iterative optimizer.
    fn budget_tol() -> Self;

    /// Shorthand for lossy conversion from `f64` literals.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl Real for f64 {
    fn prob_tol() -> Self {
        1e-12
    }

    fn budget_tol() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn prob_tol() -> Self {
        1e-5
    }

    fn budget_tol() -> Self {
        1e-4
    }
}

/// Shannon entropy of a nonnegative vector in bits, with `0 log 0 = 0`.
///
/// The input is expected to sum to one; no normalization is applied.
pub fn entropy_bits<R: Real>(p: &[R]) -> R {
    let mut h = R::zero();
    for &v in p {
        if v > R::zero() {
            h = h - v * v.log2();
        }
    }
    h
}

/// Binary entropy `H(p, 1-p)` in bits.
pub fn binary_entropy<R: Real>(p: R) -> R {
    entropy_bits(&[p, R::one() - p])
}
