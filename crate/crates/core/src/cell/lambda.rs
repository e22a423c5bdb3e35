//! The inclusion field `Lambda`, the volume statistic `N`, and `mu_eff`.
//!
//! Inside an inclusion of radius `rho`, `a Lap Lambda + k0^2 Lambda = 0`
//! with `Lambda = 1` on the sphere. With `kappa = k0 / sqrt(a)` (principal
//! root, so `Im kappa < 0` when `Im a > 0`) the radial solution is
//! `Lambda(r) = (rho / r) sin(kappa r) / sin(kappa rho)`.
//!
//! The eigenseries uses the radial Dirichlet modes of the unit ball,
//! `u_n(s) = sin(n pi s) / (sqrt(2 pi) s)`, `lambda_n = -(n pi)^2`, with
//! `c_n = int u_n = 2 sqrt(2 pi) (-1)^(n+1) / (n pi)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::Node;

/// Below this, `|sin(kappa rho)|` is treated as a resonance.
pub const RESONANCE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSpec {
    pub k0: f64,
    pub a: Complex64,
    pub rho: f64,
    pub n_modes: usize,
}

pub fn kappa(k0: f64, a: Complex64) -> Complex64 {
    k0 / a.sqrt()
}

/// `sin(z) / z`, with the removable singularity filled in.
fn sinc(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

fn check_resonance(x: Complex64) -> Result<()> {
    let s = x.sin().norm();
    if s < RESONANCE_TOL {
        Err(Error::Resonance(s))
    } else {
        Ok(())
    }
}

impl LambdaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 0.5) || self.n_modes == 0 || !(self.k0 > 0.0) {
            return Err(Error::Config(format!("invalid Lambda spec {self:?}")));
        }
        Ok(())
    }
}

/// Closed-form radial solution at radius `r` (in cell units, `0 <= r <= rho`).
pub fn lambda_closed_form(spec: &LambdaSpec, r: f64) -> Result<Complex64> {
    let k = kappa(spec.k0, spec.a);
    check_resonance(k * spec.rho)?;
    if r == spec.rho {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(sinc(k * r) / sinc(k * spec.rho))
}

/// Normalized radial mode `u_n` of the unit ball.
pub fn mode(n: usize, s: f64) -> f64 {
    let w = n as f64 * PI;
    if s < 1e-8 {
        w / (2.0 * PI).sqrt()
    } else {
        (w * s).sin() / ((2.0 * PI).sqrt() * s)
    }
}

pub fn mode_mean(n: usize) -> f64 {
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    sign * 2.0 * (2.0 * PI).sqrt() / (n as f64 * PI)
}

pub fn mode_eigenvalue(n: usize) -> f64 {
    -(n as f64 * PI).powi(2)
}

/// Partial sum of the eigenseries with `spec.n_modes` terms.
pub fn lambda_series(spec: &LambdaSpec, r: f64) -> Complex64 {
    let s = r / spec.rho;
    let kr2 = spec.k0 * spec.k0 * spec.rho * spec.rho;
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 1..=spec.n_modes {
        sum += mode_mean(n) * kr2 / (kr2 + spec.a * mode_eigenvalue(n)) * mode(n, s);
    }
    1.0 - sum
}

/// `int_{B_rho} Lambda`, closed form.
pub fn lambda_integral(rho: f64, a: Complex64, k0: f64) -> Result<Complex64> {
    if rho == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let x = kappa(k0, a) * rho;
    check_resonance(x)?;
    // (sin x - x cos x) / (x^2 sin x), series near 0
    let g = if x.norm() < 1e-3 {
        let x2 = x * x;
        (1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0) / (1.0 - x2 / 6.0 + x2 * x2 / 120.0)
    } else {
        (x.sin() - x * x.cos()) / (x * x * x.sin())
    };
    Ok(4.0 * PI * rho.powi(3) * g)
}

pub fn ball_volume(rho: f64) -> f64 {
    4.0 / 3.0 * PI * rho.powi(3)
}

/// `N(rho, a) = int_{B_rho} (1 + Lambda)`.
pub fn n_value(rho: f64, a: Complex64, k0: f64) -> Result<Complex64> {
    Ok(ball_volume(rho) + lambda_integral(rho, a, k0)?)
}

/// Quadrature for the (rho, a) marginals of the inclusion law.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalQuadrature {
    pub rho: Vec<Node<f64>>,
    pub a: Vec<Node<Complex64>>,
}

impl MarginalQuadrature {
    pub fn expect<F: FnMut(f64, Complex64) -> Result<Complex64>>(&self, mut f: F) -> Result<Complex64> {
        let mut s = Complex64::new(0.0, 0.0);
        for r in &self.rho {
            for a in &self.a {
                s += r.w * a.w * f(r.x, a.x)?;
            }
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuEff {
    /// Truncated eigenseries.
    pub series: Complex64,
    /// `1 - 2 E|B_rho| + E N`.
    pub volume_route: Complex64,
}

/// `mu_eff = 1 - sum_n c_n^2 k0^2 E{rho^5 / (k0^2 rho^2 + a lambda_n)}`,
/// together with the closed-form volume route.
pub fn mu_eff(q: &MarginalQuadrature, k0: f64, n_modes: usize) -> Result<MuEff> {
    let k2 = k0 * k0;
    let series = q.expect(|rho, a| {
        let mut s = Complex64::new(0.0, 0.0);
        for n in 1..=n_modes {
            let c = mode_mean(n);
            s += c * c * k2 * rho.powi(5) / (k2 * rho * rho + a * mode_eigenvalue(n));
        }
        Ok(s)
    })?;
    let volume = q.expect(|rho, a| Ok(n_value(rho, a, k0)? - 2.0 * ball_volume(rho)))?;
    Ok(MuEff { series: 1.0 - series, volume_route: 1.0 + volume })
}
