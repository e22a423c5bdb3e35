//! Inclusion statistics `M`, `N` and the limiting covariance tensors.

pub mod covariance;
pub mod mtensor;
pub mod nstats;

pub use covariance::{conditional_mean_m, covariance_set, ConditionalMean, CovarianceConfig, CovarianceReport, CovarianceSet, Tensor4};
pub use mtensor::{m_tensor, m_tensor_from, m_tensor_shifted, m_tensor_sphere, MEvaluation, MTensor};
pub use nstats::{n_monte_carlo, n_rho_mean, n_scalar, n_statistics, NMonteCarlo, NQuadrature, NStatistics};
