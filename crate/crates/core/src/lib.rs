//! Numerical laboratory for finite-time quenching in `h_t = Laplacian h - h^(-beta)`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod params;
pub mod profiles;
pub mod seed;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{GridFunction, Kind};
pub use params::{derive_exponents, Exponents, Parameters};
