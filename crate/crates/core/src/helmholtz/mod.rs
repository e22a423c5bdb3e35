//! Heterogeneous and homogenized Helmholtz solves with PML truncation.

pub mod functional;
pub mod grid;
pub mod krylov;
pub mod operator;
pub mod problems;

pub use functional::{fluctuation_functional, FluctuationStats};
pub use grid::{HelmholtzGrid, PmlSpec};
pub use krylov::{KrylovOptions, KrylovReport, Method};
pub use operator::{Boundary, Coefficients, FaceAverage, HelmholtzOperator, Permittivity};
pub use problems::{
    to_complex, wavelength,
    heterogeneous_coefficients, homogenized_coefficients, pairing, solve_heterogeneous, solve_homogenized, two_scale_error,
    weighted_green, GaussianBump, GridSpec, HelmholtzSetup, HelmholtzSolution,
};
