//! Elimination of the unconstrained variables through a matrix-free Schur
//! complement operator, plus a dense reference implementation.

mod graph;
mod operator;
pub mod oracle;

pub use graph::{Edge, UnconstrainedGraph};
pub use operator::{RecoverMode, SchurOperator};
