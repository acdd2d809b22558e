//! Truncated multivariate Taylor polynomial algebra.
//!
//! Functions are carried as polynomials in deviation variables `δ` around an
//! expansion point: arithmetic, intrinsic functions, partial derivatives and
//! map composition all act on coefficient tables, truncated at the context's
//! maximum order.

mod algebra;
mod context;
mod scalar;
mod vector;

pub use algebra::{Algebra, Jet1};
pub use context::AlgebraContext;
pub use scalar::{DAScalar, Intrinsic, PRUNE_RELATIVE};
pub use vector::{DAVector, MapEvaluator};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DaError {
    #[error("invalid algebra context (n_vars={n_vars}, max_order={max_order}): {reason}")]
    InvalidContext { n_vars: usize, max_order: usize, reason: &'static str },
    #[error("variable index {index} out of range for {n_vars} variables")]
    VariableIndex { index: usize, n_vars: usize },
    #[error("operands belong to different contexts {left:?} and {right:?}")]
    ContextMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("{function} expansion point {value} is outside the function's domain")]
    Domain { function: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("monomial of degree {degree} exceeds truncation order {max_order}")]
    OrderExceeded { degree: usize, max_order: usize },
    #[error("empty polynomial vector")]
    Empty,
    #[error("malformed dump line {line}: {content:?}")]
    Parse { line: usize, content: String },
}
