//! Numerical laboratory for wavefield fluctuations in high-contrast random
//! media: medium sampling, corrector cell problems, inclusion statistics,
//! Helmholtz solves and the limiting second moments.

// Index loops mirror the tensor notation; `!(x > 0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod chatterjee;
pub mod checks;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod grid;
pub mod helmholtz;
pub mod laws;
pub mod limit;
pub mod medium;
pub mod mnstats;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64;
