//! White-noise fields on the Helmholtz grid and the SPDE right-hand side.
//!
//! On a voxel of volume `h^3` the noises are i.i.d. Gaussian vectors with
//! second moments `C / h^3`. The real vector per voxel is
//! `(W_00, W_01, ..., W_22, Re N^theta, Im N^theta)`; `N^a` is an
//! independent complex pair. The cross moment is taken as
//! `E{W N^theta} = -C^WN`, the sign under which the explicit limit formula
//! is the variance of `(g, v)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Dims};
use crate::helmholtz::{Coefficients, HelmholtzGrid, HelmholtzSetup, HelmholtzSolution};
use crate::medium::DomainB;
use crate::mnstats::CovarianceSet;
use crate::rng::{tag, RngKey};

/// Relative PSD slack of the reconstructed real covariance.
pub const PSD_TOL: f64 = 1e-10;

/// Real second moments of one voxel (before the `1/h^3` scaling) and their
/// symmetric square roots.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseLaw {
    pub cov: [[f64; 11]; 11],
    pub cov_a: [[f64; 2]; 2],
    pub min_eigenvalue: f64,
    sqrt: [[f64; 11]; 11],
    sqrt_a: [[f64; 2]; 2],
}

/// Second moments of `(Re N, Im N)` from `E{N^2} = c` and `E{|N|^2} = c_star`.
fn complex_block(c: C, c_star: f64) -> [[f64; 2]; 2] {
    [[0.5 * (c_star + c.re), 0.5 * c.im], [0.5 * c.im, 0.5 * (c_star - c.re)]]
}

fn sym_sqrt<const N: usize>(m: &[[f64; N]; N], what: &str) -> Result<([[f64; N]; N], f64)> {
    let a = DMatrix::<f64>::from_fn(N, N, |i, j| 0.5 * (m[i][j] + m[j][i]));
    let tr: f64 = (0..N).map(|i| a[(i, i)]).sum();
    let e = SymmetricEigen::new(a);
    let min = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL * tr.abs() {
        return Err(Error::Statistics(format!("{what} covariance is not PSD: smallest eigenvalue {min:e}, trace {tr:e}")));
    }
    let d = DMatrix::<f64>::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let s = &e.eigenvectors * d * e.eigenvectors.transpose();
    Ok((std::array::from_fn(|i| std::array::from_fn(|j| s[(i, j)])), min))
}

impl NoiseLaw {
    pub fn new(cov: &CovarianceSet) -> Result<Self> {
        let mut m = [[0.0; 11]; 11];
        for p in 0..9 {
            for q in 0..9 {
                m[p][q] = cov.c_w[p / 3][p % 3][q / 3][q % 3];
            }
            let x = -cov.c_wn[p / 3][p % 3];
            m[p][9] = x.re;
            m[9][p] = x.re;
            m[p][10] = x.im;
            m[10][p] = x.im;
        }
        let b = complex_block(cov.c_theta, cov.c_theta_star);
        for i in 0..2 {
            for j in 0..2 {
                m[9 + i][9 + j] = b[i][j];
            }
        }
        let cov_a = complex_block(cov.c_a, cov.c_a_star);
        let (sqrt, min) = sym_sqrt(&m, "(W, N^theta)")?;
        let (sqrt_a, _) = sym_sqrt(&cov_a, "N^a")?;
        Ok(NoiseLaw { cov: m, cov_a, min_eigenvalue: min, sqrt, sqrt_a })
    }
}

/// One realization of `(W, N^theta, N^a)` on voxel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseFields {
    pub dims: Dims,
    pub h: f64,
    pub origin: [f64; 3],
    /// `W_ij` at index `3 i + j`.
    pub w: Vec<[f64; 9]>,
    pub n_theta: Vec<C>,
    pub n_a: Vec<C>,
    pub cell_volume: f64,
}

impl NoiseFields {
    pub fn zeros(grid: &HelmholtzGrid) -> Self {
        let n = grid.len();
        NoiseFields {
            dims: grid.dims,
            h: grid.h,
            origin: grid.origin,
            w: vec![[0.0; 9]; n],
            n_theta: vec![C::new(0.0, 0.0); n],
            n_a: vec![C::new(0.0, 0.0); n],
            cell_volume: grid.h.powi(3),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut o = self.clone();
        o.w.iter_mut().for_each(|w| w.iter_mut().for_each(|x| *x *= s));
        o.n_theta.iter_mut().for_each(|x| *x *= s);
        o.n_a.iter_mut().for_each(|x| *x *= s);
        o
    }
}

/// `1` on voxels whose center lies deeper than `delta` inside `B`, and whose
/// centered-difference neighbors stay off the PML.
pub fn noise_mask(grid: &HelmholtzGrid, b: &DomainB, delta: f64) -> Vec<f64> {
    let dims = grid.dims;
    (0..grid.len())
        .map(|v| {
            let c = dims.coords(v);
            let clear = (0..3).all(|d| c[d] > grid.pml_voxels && c[d] + grid.pml_voxels + 1 < dims.0[d]);
            if clear && b.depth(grid.center(v)) > delta {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Independent draws on every voxel with a nonzero mask entry. Each x-slab
/// has its own key, so the result does not depend on the thread count.
pub fn sample_noise(cov: &CovarianceSet, grid: &HelmholtzGrid, mask: &[f64], key: &RngKey) -> Result<NoiseFields> {
    let law = NoiseLaw::new(cov)?;
    sample_with_law(&law, grid, mask, key)
}

pub fn sample_with_law(law: &NoiseLaw, grid: &HelmholtzGrid, mask: &[f64], key: &RngKey) -> Result<NoiseFields> {
    if mask.len() != grid.len() {
        return Err(Error::GridMismatch("noise mask has the wrong length".into()));
    }
    let mut out = NoiseFields::zeros(grid);
    let scale = 1.0 / out.cell_volume.sqrt();
    let plane = grid.dims.0[1] * grid.dims.0[2];
    let root = key.child(tag::NOISE);
    out.w
        .par_chunks_mut(plane)
        .zip(out.n_theta.par_chunks_mut(plane))
        .zip(out.n_a.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(i, ((w, nt), na))| {
            let mut rng = root.child(i as u64).rng();
            for (k, m) in mask[i * plane..(i + 1) * plane].iter().enumerate() {
                if *m == 0.0 {
                    continue;
                }
                let z: [f64; 11] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let za: [f64; 2] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let mut x = [0.0; 11];
                for (p, xp) in x.iter_mut().enumerate() {
                    *xp = scale * m * (0..11).map(|q| law.sqrt[p][q] * z[q]).sum::<f64>();
                }
                w[k].copy_from_slice(&x[..9]);
                nt[k] = C::new(x[9], x[10]);
                let a0 = (0..2).map(|q| law.sqrt_a[0][q] * za[q]).sum::<f64>();
                let a1 = (0..2).map(|q| law.sqrt_a[1][q] * za[q]).sum::<f64>();
                na[k] = scale * m * C::new(a0, a1);
            }
        });
    Ok(out)
}

/// Centered-difference gradient at an interior voxel.
pub(crate) fn grad(u: &ComplexField, v: usize) -> [C; 3] {
    let dims = u.dims;
    std::array::from_fn(|d| (u.data[dims.wrap(v, d, true)] - u.data[dims.wrap(v, d, false)]) / (2.0 * u.h))
}

/// `-a_b div_c(W grad_c u_h) - k0^2 (N^theta + N^a) u_h`, with `div_c` the
/// centered divergence (the negative adjoint of the centered gradient).
pub fn noise_rhs(noise: &NoiseFields, u_h: &ComplexField, a_b: f64, k0: f64) -> Result<ComplexField> {
    if noise.dims != u_h.dims || noise.h != u_h.h || noise.origin != u_h.origin {
        return Err(Error::GridMismatch("noise and u_h are on different grids".into()));
    }
    let dims = u_h.dims;
    let n = dims.len();
    let active = |v: usize| noise.w[v].iter().any(|x| *x != 0.0);
    // flux q = W grad u on voxels carrying noise
    let flux: Vec<[C; 3]> = (0..n)
        .into_par_iter()
        .map(|v| {
            if !active(v) {
                return [C::new(0.0, 0.0); 3];
            }
            let g = grad(u_h, v);
            std::array::from_fn(|i| (0..3).map(|j| noise.w[v][3 * i + j] * g[j]).sum())
        })
        .collect();
    let k2 = k0 * k0;
    let data: Vec<C> = (0..n)
        .into_par_iter()
        .map(|v| {
            let c = dims.coords(v);
            let mut div = C::new(0.0, 0.0);
            for d in 0..3 {
                if c[d] + 1 < dims.0[d] {
                    div += flux[dims.wrap(v, d, true)][d];
                }
                if c[d] > 0 {
                    div -= flux[dims.wrap(v, d, false)][d];
                }
            }
            -a_b * div / (2.0 * u_h.h) - k2 * (noise.n_theta[v] + noise.n_a[v]) * u_h.data[v]
        })
        .collect();
    Ok(ComplexField { dims, h: u_h.h, origin: u_h.origin, data })
}

/// One realization of `v`: the homogenized solve with the noise right-hand side.
pub fn sample_v(setup: &HelmholtzSetup, coef: &Coefficients, noise: &NoiseFields, u_h: &ComplexField, a_b: f64) -> Result<HelmholtzSolution> {
    let f = noise_rhs(noise, u_h, a_b, setup.k0)?;
    setup.solve_with(coef, &f.data, None)
}

/// `(g, v) = h^3 sum G_{h,g} f` by reciprocity of the complex-symmetric
/// discrete operator; valid when `g` vanishes on the PML.
pub fn pairing_by_reciprocity(green: &ComplexField, noise: &NoiseFields, u_h: &ComplexField, a_b: f64, k0: f64) -> Result<C> {
    let f = noise_rhs(noise, u_h, a_b, k0)?;
    if green.dims != f.dims {
        return Err(Error::GridMismatch("G and the noise are on different grids".into()));
    }
    let h3 = f.h.powi(3);
    Ok(h3 * crate::stats::ordered_sum(f.data.len(), |v| green.data[v] * f.data[v]))
}
