//! Numerical synthesis of n-qubit unitaries into circuits of u3 rotations
//! and fixed two-qubit controlled gates.
//!
//! The pipeline disentangles one qubit at a time: a layered template is
//! applied after the target unitary and its single-qubit angles are tuned by
//! sequential per-block BFGS until the top qubit's dynamics factor out of the
//! combined product. The factored subblock carries the recursion down to a
//! single qubit, closing rotations return every qubit to its initial state,
//! and a final all-parameter fidelity polish sharpens the result. Sparse
//! device connectivity is handled natively by building the template from
//! topology edges (with mediated interactions where direct edges are
//! missing) instead of inserting swap gates afterwards.

pub mod cli;
pub mod cost;
pub mod decomposer;
pub mod error;
pub mod gates;
pub mod numerics;
pub mod optimizer;
pub mod qasm;
pub mod structure;
pub mod topology;

pub use error::{Error, Result};
