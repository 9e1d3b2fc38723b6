//! Exact rational and dyadic arithmetic shared by every other module.
//!
//! Norms are irrational in general, so every norm comparison in the crate is
//! made between exact squared quantities. Operator norms are only ever
//! bounded: above by the Frobenius norm, below by probe quotients.

mod ball;
mod linalg;
mod matrix;
mod scalar;

pub use ball::{chebyshev_ball, circumball, Ball};
pub use linalg::{
    inverse, ldlt_posdef_check, primitive_direction, psd_check, rank, rowspace_and_kernel,
    rref, solve_exact, Subspaces,
};
pub use matrix::{QMatrix, QVector};
pub use scalar::{
    exact_sqrt, fmt_rational, int, isqrt, normalize_dyadic, parse_rational, pow2, pow2_neg,
    pow4_neg, rat, round_to_dyadic, serde_rational, serde_rational_opt, serde_rational_vec,
    sqrt_bounds, to_f64, Dyadic, Rational,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArithError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix is singular")]
    Singular,
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("cannot parse rational from {0:?}")]
    Parse(String),
}
