//! Convex and semiconvex cartoon/texture decomposition with lifted,
//! low-rank texture atoms.

// links the system OpenBLAS that provides LAPACK
extern crate openblas_src;

pub mod cli;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod problems;
pub mod prox;
pub mod scalar;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{coeff_grid, inner, Array, CoeffGrid, Image, LiftedTensor, Mask, MomentField, SymField, VecField};
pub use scalar::Scalar;

pub type Image64 = Image<f64>;
pub type Image32 = Image<f32>;
pub type LiftedTensor64 = LiftedTensor<f64>;
pub type LiftedTensor32 = LiftedTensor<f32>;
