//! Finite-volume Laplacian with face conductances and a Jacobi-preconditioned
//! conjugate gradient solver.
//!
//! Row `v` of the operator is `sum_f sigma_f (phi_v - phi_nb(f)) + extra_v phi_v`:
//! the outward flux of `-grad phi` from voxel `v`, divided by `h`.

use rayon::prelude::*;

use crate::cell::supercell::Perforation;
use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::stats::ordered_sum;

#[derive(Clone, Debug)]
pub struct FaceOperator {
    pub dims: Dims,
    pub h: f64,
    pub faces: [Vec<f64>; 3],
    /// Extra diagonal from boundary conditions (zero for periodic problems).
    pub extra: Vec<f64>,
    pub diag: Vec<f64>,
}

impl FaceOperator {
    pub fn new(dims: Dims, h: f64, faces: [Vec<f64>; 3], extra: Vec<f64>) -> Self {
        let n = dims.len();
        let mut diag = extra.clone();
        for d in 0..3 {
            for v in 0..n {
                let s = faces[d][v];
                diag[v] += s;
                diag[dims.wrap(v, d, true)] += s;
            }
        }
        FaceOperator { dims, h, faces, extra, diag }
    }

    pub fn from_perforation(p: &Perforation) -> Self {
        Self::new(p.dims, p.h, p.faces.clone(), vec![0.0; p.dims.len()])
    }

    pub fn is_singular(&self) -> bool {
        self.extra.iter().all(|e| *e == 0.0)
    }

    pub fn active(&self, v: usize) -> bool {
        self.diag[v] > 0.0
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, nz] = self.dims.0;
        let plane = ny * nz;
        let [fx, fy, fz] = &self.faces;
        y.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
            let ip = if i + 1 == nx { 0 } else { i + 1 } * plane;
            let im = if i == 0 { nx - 1 } else { i - 1 } * plane;
            let i0 = i * plane;
            for j in 0..ny {
                let jp = if j + 1 == ny { 0 } else { j + 1 } * nz;
                let jm = if j == 0 { ny - 1 } else { j - 1 } * nz;
                let j0 = j * nz;
                for k in 0..nz {
                    let kp = if k + 1 == nz { 0 } else { k + 1 };
                    let km = if k == 0 { nz - 1 } else { k - 1 };
                    let v = i0 + j0 + k;
                    let xv = x[v];
                    let vxm = im + j0 + k;
                    let vym = i0 + jm + k;
                    let vzm = i0 + j0 + km;
                    slab[j0 + k] = self.extra[v] * xv
                        + fx[v] * (xv - x[ip + j0 + k])
                        + fx[vxm] * (xv - x[vxm])
                        + fy[v] * (xv - x[i0 + jp + k])
                        + fy[vym] * (xv - x[vym])
                        + fz[v] * (xv - x[i0 + j0 + kp])
                        + fz[vzm] * (xv - x[vzm]);
                }
            }
        });
    }

    /// `sum_f sigma_f (e_d . n_f)` over the faces of each voxel: the
    /// divergence source of the corrector problem (times `1/h`).
    pub fn unit_flux_divergence(&self, d: usize) -> Vec<f64> {
        let dims = self.dims;
        (0..dims.len())
            .map(|v| self.faces[d][v] - self.faces[d][dims.wrap(v, d, false)])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Stop when `max|r| <= tol * max|b|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-9, max_iter: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Final `max|r| / max|b|`.
    pub residual: f64,
    /// Relative residual every 10 iterations.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    ordered_sum(a.len(), |i| a[i] * b[i])
}

fn max_abs(a: &[f64]) -> f64 {
    a.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
}

/// Solve `A x = b`, starting from the contents of `x`. For a singular
/// (periodic Neumann) operator the mean of `b` over active voxels is
/// removed first; the caller fixes the gauge afterwards.
pub fn pcg(op: &FaceOperator, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgReport> {
    let n = op.dims.len();
    let active: Vec<bool> = (0..n).map(|v| op.active(v)).collect();
    let mut rhs = b.to_vec();
    for v in 0..n {
        if !active[v] {
            rhs[v] = 0.0;
            x[v] = 0.0;
        }
    }
    if op.is_singular() {
        let cnt = active.iter().filter(|a| **a).count().max(1) as f64;
        let m = rhs.iter().sum::<f64>() / cnt;
        for v in 0..n {
            if active[v] {
                rhs[v] -= m;
            }
        }
    }
    let bnorm = max_abs(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, residual: 0.0, history: vec![] });
    }
    let inv: Vec<f64> = op.diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    r.par_iter_mut().zip(rhs.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    let mut rel = max_abs(&r) / bnorm;
    for it in 0..opts.max_iter {
        if rel <= opts.tol {
            return Ok(CgReport { iterations: it, residual: rel, history });
        }
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(Error::Breakdown { solver: "pcg", iteration: it });
        }
        let alpha = rz / pq;
        x.par_iter_mut().zip(p.par_iter()).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(q.par_iter()).for_each(|(ri, qi)| *ri -= alpha * qi);
        z.par_iter_mut()
            .zip(r.par_iter().zip(inv.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        rel = max_abs(&r) / bnorm;
        if it % 10 == 0 {
            history.push(rel);
        }
    }
    if rel <= opts.tol {
        return Ok(CgReport { iterations: opts.max_iter, residual: rel, history });
    }
    Err(Error::NotConverged { solver: "pcg", iterations: opts.max_iter, residual: rel, history })
}
