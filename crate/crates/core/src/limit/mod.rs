//! Limiting second moments of the fluctuation functional, by quadrature and
//! by sampling the white-noise equation for `v`.
//!
//! Both routes share one discretization: voxel-centered noise on the mask of
//! `B`, centered differences for the gradients. With `alpha_ij = a_b dG_i du_j`
//! and `beta = -k0^2 G u` per voxel, `(g, v) = h^3 sum (alpha : W + beta N)`,
//! so the quadrature sums below are exactly the variance and pseudo-variance
//! of the sampled pairing.

pub mod noise;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ComplexField;
use crate::helmholtz::HelmholtzGrid;
use crate::medium::DomainB;
use crate::mnstats::CovarianceSet;

pub use noise::{noise_mask, noise_rhs, pairing_by_reciprocity, sample_noise, sample_v, sample_with_law, NoiseFields, NoiseLaw};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitMoments {
    pub e_abs2: f64,
    pub e_sq: C,
    /// Same sums on the even-index subgrid (spacing `2h`).
    pub coarse_e_abs2: f64,
    pub coarse_e_sq: C,
    /// Richardson estimate `|fine - coarse| / 3` for a second-order rule.
    pub quadrature_error: f64,
    pub grid_h: f64,
    pub voxels: usize,
}

/// Covariance-independent integrals of the limit on one rule. With
/// `p_{3i+j} = dG_i du_j` and `q = G u`:
/// `w[a][b] = sum p_a conj(p_b)`, `w_sq[a][b] = sum p_a p_b`,
/// `nn = sum |q|^2`, `nn_sq = sum q^2`, `wn[a] = sum p_a conj(q)`,
/// `wn_sq[a] = sum p_a q`, each times the cell volume of the rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitBasis {
    pub w: Vec<[C; 9]>,
    pub w_sq: Vec<[C; 9]>,
    pub nn: f64,
    pub nn_sq: C,
    pub wn: [C; 9],
    pub wn_sq: [C; 9],
}

impl LimitBasis {
    fn zero() -> Self {
        let z = C::new(0.0, 0.0);
        LimitBasis { w: vec![[z; 9]; 9], w_sq: vec![[z; 9]; 9], nn: 0.0, nn_sq: z, wn: [z; 9], wn_sq: [z; 9] }
    }

    fn add(&mut self, g: &ComplexField, u: &ComplexField, v: usize, weight: f64) {
        let dg = noise::grad(g, v);
        let du = noise::grad(u, v);
        let q = g.data[v] * u.data[v];
        let p: [C; 9] = std::array::from_fn(|k| dg[k / 3] * du[k % 3]);
        for a in 0..9 {
            for b in 0..9 {
                self.w[a][b] += weight * p[a] * p[b].conj();
                self.w_sq[a][b] += weight * p[a] * p[b];
            }
            self.wn[a] += weight * p[a] * q.conj();
            self.wn_sq[a] += weight * p[a] * q;
        }
        self.nn += weight * q.norm_sqr();
        self.nn_sq += weight * q * q;
    }

    /// `(E|U|^2, E U^2)` for one covariance set.
    pub fn moments(&self, cov: &CovarianceSet, a_b: f64, k0: f64) -> (f64, C) {
        let k2 = k0 * k0;
        let mut abs2 = 0.0;
        let mut sq = C::new(0.0, 0.0);
        for a in 0..9 {
            for b in 0..9 {
                let c = cov.c_w[a / 3][a % 3][b / 3][b % 3];
                abs2 += a_b * a_b * c * self.w[a][b].re;
                sq += a_b * a_b * c * self.w_sq[a][b];
            }
            let c = cov.c_wn[a / 3][a % 3];
            // conj(C) p conj(q) + C conj(p) q
            abs2 += 2.0 * a_b * k2 * (c.conj() * self.wn[a]).re;
            sq += 2.0 * a_b * k2 * c * self.wn_sq[a];
        }
        abs2 += k2 * k2 * (cov.c_theta_star + cov.c_a_star) * self.nn;
        sq += k2 * k2 * (cov.c_theta + cov.c_a) * self.nn_sq;
        (abs2, sq)
    }

    /// Standard error of `E|U|^2` from the entrywise standard errors of the
    /// covariance set, treated as independent. `C^W` errors are counted once
    /// per unordered index pair.
    pub fn propagated_stderr(&self, cov: &CovarianceSet, a_b: f64, k0: f64) -> f64 {
        let k2 = k0 * k0;
        let mut var = 0.0;
        for a in 0..9 {
            for b in a..9 {
                let s = cov.c_w_stderr[a / 3][a % 3][b / 3][b % 3];
                let d = if a == b { self.w[a][a].re } else { self.w[a][b].re + self.w[b][a].re };
                var += (a_b * a_b * d * s).powi(2);
            }
            let s = cov.c_wn_stderr[a / 3][a % 3];
            var += (2.0 * a_b * k2 * self.wn[a].norm() * s).powi(2);
        }
        var += (k2 * k2 * self.nn).powi(2) * (cov.c_theta_star_stderr.powi(2) + cov.c_a_star_stderr.powi(2));
        var.sqrt()
    }
}

/// Integrals on the voxels of `B` deeper than `delta` (`fine`) and on the
/// even-index subset with weight `8 h^3` (`coarse`).
pub fn limit_basis(
    u_h: &ComplexField,
    g_hg: &ComplexField,
    grid: &HelmholtzGrid,
    domain_b: &DomainB,
    delta: f64,
) -> Result<(LimitBasis, LimitBasis, usize)> {
    u_h.same_grid(g_hg)?;
    if u_h.dims != grid.dims || u_h.h != grid.h || u_h.origin != grid.origin {
        return Err(Error::GridMismatch("u_h is not on the Helmholtz grid".into()));
    }
    let mask = noise_mask(grid, domain_b, delta);
    let h3 = grid.h.powi(3);
    let mut fine = LimitBasis::zero();
    let mut coarse = LimitBasis::zero();
    let mut voxels = 0;
    for (v, m) in mask.iter().enumerate() {
        if *m == 0.0 {
            continue;
        }
        voxels += 1;
        fine.add(g_hg, u_h, v, h3);
        if grid.dims.coords(v).iter().all(|c| c % 2 == 0) {
            coarse.add(g_hg, u_h, v, 8.0 * h3);
        }
    }
    Ok((fine, coarse, voxels))
}

impl LimitMoments {
    pub fn from_basis(fine: &LimitBasis, coarse: &LimitBasis, voxels: usize, grid_h: f64, cov: &CovarianceSet, a_b: f64, k0: f64) -> Self {
        let (e_abs2, e_sq) = fine.moments(cov, a_b, k0);
        let (coarse_e_abs2, coarse_e_sq) = coarse.moments(cov, a_b, k0);
        let quadrature_error = (e_abs2 - coarse_e_abs2).abs().max((e_sq - coarse_e_sq).norm()) / 3.0;
        LimitMoments { e_abs2, e_sq, coarse_e_abs2, coarse_e_sq, quadrature_error, grid_h, voxels }
    }
}

/// `E|U|^2` and `E U^2` of the limit for test function weight `G_{h,g}`
/// (the homogenized solution with source `g`) and homogenized field `u_h`,
/// integrated over voxels of `B` deeper than `delta`.
#[allow(clippy::too_many_arguments)]
pub fn limit_second_moments(
    cov: &CovarianceSet,
    u_h: &ComplexField,
    g_hg: &ComplexField,
    grid: &HelmholtzGrid,
    domain_b: &DomainB,
    delta: f64,
    a_b: f64,
    k0: f64,
) -> Result<LimitMoments> {
    let (fine, coarse, voxels) = limit_basis(u_h, g_hg, grid, domain_b, delta)?;
    Ok(LimitMoments::from_basis(&fine, &coarse, voxels, grid.h, cov, a_b, k0))
}
