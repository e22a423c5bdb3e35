//! Effective permittivity from an ensemble of solved supercells.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cell::corrector::CorrectorFields;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    /// Symmetric part of the ensemble average.
    pub a_eff: [[f64; 3]; 3],
    /// `|A - A^T| / 2` in the Frobenius norm, before symmetrization.
    pub asymmetry: f64,
    pub eigenvalues: [f64; 3],
    /// Entrywise standard error over the ensemble (0 for one sample).
    pub stderr: [[f64; 3]; 3],
    pub samples: usize,
}

/// `a_b` times the ensemble mean of the volume average of `1_fluid Q`.
pub fn a_eff<'a, I>(a_b: f64, correctors: I) -> Result<EffectiveTensor>
where
    I: IntoIterator<Item = &'a CorrectorFields>,
{
    let fluxes: Vec<[[f64; 3]; 3]> = correctors.into_iter().map(|c| c.mean_flux()).collect();
    a_eff_from_fluxes(a_b, &fluxes)
}

/// Same, from the per-sample mean fluxes `[d][i]`.
pub fn a_eff_from_fluxes(a_b: f64, fluxes: &[[[f64; 3]; 3]]) -> Result<EffectiveTensor> {
    let mut stats = vec![crate::stats::Moments::default(); 9];
    for q in fluxes {
        for d in 0..3 {
            for i in 0..3 {
                stats[3 * d + i].push(a_b * q[d][i]);
            }
        }
    }
    let samples = fluxes.len();
    if samples == 0 {
        return Err(Error::Statistics("a_eff needs at least one corrector".into()));
    }
    let m = Matrix3::from_fn(|r, c| stats[3 * r + c].mean);
    let sym = (m + m.transpose()) * 0.5;
    let asymmetry = ((m - m.transpose()) * 0.5).norm();
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let mut ev = [eig[0], eig[1], eig[2]];
    ev.sort_by(f64::total_cmp);
    Ok(EffectiveTensor {
        a_eff: std::array::from_fn(|r| std::array::from_fn(|c| sym[(r, c)])),
        asymmetry,
        eigenvalues: ev,
        stderr: std::array::from_fn(|r| std::array::from_fn(|c| if samples > 1 { stats[3 * r + c].stderr() } else { 0.0 })),
        samples,
    })
}
