//! Cell problems: the inclusion field, correctors on periodic supercells,
//! the perforated Green's function and effective coefficients.

pub mod corrector;
pub mod effective;
pub mod green;
pub mod lambda;
pub mod laplace;
pub mod representation;
pub mod supercell;

pub use effective::{a_eff, a_eff_from_fluxes, EffectiveTensor};
pub use corrector::{solve_corrector, solve_modified_corrector, CorrectorOptions, CorrectorSolution};
pub use lambda::{lambda_closed_form, lambda_series, mu_eff, n_value, LambdaSpec, MarginalQuadrature, MuEff};
pub use supercell::{FaceWeight, Perforation, SupercellMedium};
