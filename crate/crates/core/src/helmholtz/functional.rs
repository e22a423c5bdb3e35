//! The fluctuation functional `U_eta(g) = (g, u_eta - E u_eta) / eta^{3/2}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::jackknife;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationStats {
    pub eta: f64,
    /// Centered, scaled samples `U_s`.
    pub samples: Vec<Complex64>,
    /// `sum |U_s|^2 / (n - 1)`.
    pub e_abs2: f64,
    pub e_abs2_stderr: f64,
    /// `sum U_s^2 / (n - 1)`, no conjugate.
    pub e_sq: Complex64,
    pub e_sq_stderr: f64,
}

fn second_moments(p: &[Complex64]) -> (f64, Complex64) {
    let n = p.len() as f64;
    let m: Complex64 = p.iter().sum::<Complex64>() / n;
    let abs2 = p.iter().map(|z| (z - m).norm_sqr()).sum::<f64>() / (n - 1.0);
    let sq = p.iter().map(|z| (z - m) * (z - m)).sum::<Complex64>() / (n - 1.0);
    (abs2, sq)
}

/// Statistics of `U_eta(g)` from the pairings `(g, u_eta)` of an ensemble.
pub fn fluctuation_functional(pairings: &[Complex64], eta: f64) -> Result<FluctuationStats> {
    if pairings.len() < 2 {
        return Err(Error::Statistics(format!("ensemble of {} samples, need at least 2", pairings.len())));
    }
    let scale = eta.powf(-1.5);
    let scaled: Vec<Complex64> = pairings.iter().map(|p| p * scale).collect();
    // shift by one sample first so an ensemble of equal values centers to exactly 0
    let shift = scaled[0];
    let scaled: Vec<Complex64> = scaled.iter().map(|z| z - shift).collect();
    let n = scaled.len() as f64;
    let mean: Complex64 = scaled.iter().sum::<Complex64>() / n;
    let samples: Vec<Complex64> = scaled.iter().map(|z| z - mean).collect();
    let (e_abs2, e_sq) = second_moments(&scaled);
    let e_abs2_stderr = jackknife(&scaled, |s| second_moments(s).0);
    let re = jackknife(&scaled, |s| second_moments(s).1.re);
    let im = jackknife(&scaled, |s| second_moments(s).1.im);
    Ok(FluctuationStats { eta, samples, e_abs2, e_abs2_stderr, e_sq, e_sq_stderr: re.hypot(im) })
}
