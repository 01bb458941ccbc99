//! Finite-difference laboratory for the quasilinear source problem
//! `div((sigma + q u) grad u) = F` on the unit square: forward solves,
//! Dirichlet-to-Neumann maps and their linearizations, magnetic
//! Schrödinger reduction, gauge constructions, complex geometric optics
//! probes and the coupled-system diagnostics.

// NaN must fail the positivity guards, which `!(x > 0.0)` does.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgo;
pub mod dnmap;
pub mod elliptic;
pub mod error;
pub mod forward;
pub mod gauge;
mod linalg;
pub mod linops;
pub mod mesh;
pub mod recon;

pub use error::{Error, Result};
