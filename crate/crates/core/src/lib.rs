// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod oracle;
pub mod stencil;
pub mod taylor;

pub use error::{Error, Result};
