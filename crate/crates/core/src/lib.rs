//! Minimal discs with Lagrangian boundary in flat `ℂᵐ` and `ℂPᵐ`, their Maslov
//! and partial Maslov indices, and holomorphicity certificates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod birkhoff;
pub mod error;
pub mod field;
pub mod init;
pub mod kahler;
pub mod linalg;
pub mod loops;
pub mod mesh;
pub mod pipeline;
pub mod scenario;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
