//! Pseudo-spectral solver for the reduced nonlocal Peierls–Nabarro equation
//! `ℒu + γ'(u)/(2G) = 0` on `ℝ × 𝕋^{d-1}`, with diagnostics for the kernel,
//! the linearized spectrum and the elastic field in the two half-spaces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elasticity;
pub mod energy;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod minimize;
pub mod quadrature;
pub mod spectrum;
pub mod symbols;

pub use error::{Error, Result};
pub use grid::{build_grid, forward_transform, inverse_transform, Grid, GridSpec, RealField, SpectralField};
