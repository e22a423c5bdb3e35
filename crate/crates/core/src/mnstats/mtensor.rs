//! The surface statistic `M` of the origin inclusion.
//!
//! `M_lk = int_{dB0} n . (e_l + grad phi^-_l) (y_k + phi_k) dS` with
//! `phi^-` the corrector with the origin inclusion removed. Both
//! `U = y_l + phi^-_l` and `V = y_k + phi_k` are harmonic in the fluid part
//! of the origin cell and `dV/dn = 0` on the sphere, so Green's second
//! identity moves the integral to the cell faces:
//! `M_lk = int_{d cell} (V dU/dnu - U dV/dnu) dS`. That form is evaluated
//! with discrete face fluxes, which keeps it consistent with the discrete
//! conservation law. A sphere-quadrature evaluation on a lifted sphere is
//! kept as an independent check.

use serde::{Deserialize, Serialize};

use crate::cell::corrector::{CorrectorFields, CorrectorSolution};
use crate::cell::supercell::SupercellMedium;
use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::quadrature::sphere_rule;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MTensor(pub [[f64; 3]; 3]);

impl MTensor {
    pub fn zero() -> Self {
        MTensor([[0.0; 3]; 3])
    }

    pub fn max_abs_diff(&self, o: &MTensor) -> f64 {
        let mut m: f64 = 0.0;
        for l in 0..3 {
            for k in 0..3 {
                m = m.max((self.0[l][k] - o.0[l][k]).abs());
            }
        }
        m
    }

    pub fn add_scaled(&mut self, o: &MTensor, s: f64) {
        for l in 0..3 {
            for k in 0..3 {
                self.0[l][k] += s * o.0[l][k];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MEvaluation {
    pub m: MTensor,
    /// Largest `|int dU/dnu|` over `l`: what a unit constant added to
    /// `phi_k` would change `M` by.
    pub gauge_check: f64,
}

/// Fields entering one face sum.
struct Faces<'a> {
    dims: Dims,
    h: f64,
    lo: [usize; 3],
    n: usize,
    u: &'a CorrectorFields,
    v: &'a CorrectorFields,
}

impl Faces<'_> {
    /// Walk the faces of the cell cube: calls `f(inside voxel, outside voxel, axis d, outward sign)`.
    fn each(&self, mut f: impl FnMut(usize, usize, usize, f64)) {
        let dims = self.dims;
        for d in 0..3 {
            let (d1, d2) = ((d + 1) % 3, (d + 2) % 3);
            for side in [0usize, 1] {
                for a in 0..self.n {
                    for b in 0..self.n {
                        let mut c = [0usize; 3];
                        c[d] = self.lo[d] + if side == 1 { self.n - 1 } else { 0 };
                        c[d1] = self.lo[d1] + a;
                        c[d2] = self.lo[d2] + b;
                        let vin = dims.idx(c[0], c[1], c[2]);
                        let vout = dims.wrap(vin, d, side == 1);
                        f(vin, vout, d, if side == 1 { 1.0 } else { -1.0 });
                    }
                }
            }
        }
    }

    /// Local coordinate `y_k` (cell corner at 0) of the inside voxel.
    fn y(&self, v: usize, k: usize) -> f64 {
        (self.dims.coords(v)[k] - self.lo[k]) as f64 * self.h + 0.5 * self.h
    }

    /// Flux conductance of the face between `vin` and `vout` along `d`.
    fn sigma(fields: &CorrectorFields, vin: usize, vout: usize, d: usize, sign: f64) -> f64 {
        let v = if sign > 0.0 { vin } else { vout };
        fields.perforation.faces[d][v]
    }

    fn m_and_gauge(&self, shift_v: f64, shift_u: f64) -> MEvaluation {
        let h2 = self.h * self.h;
        let mut m = [[0.0; 3]; 3];
        let mut gauge = [0.0; 3];
        self.each(|vin, vout, d, sign| {
            let su = Self::sigma(self.u, vin, vout, d, sign);
            let sv = Self::sigma(self.v, vin, vout, d, sign);
            for l in 0..3 {
                let yl_in = self.y(vin, l);
                let yl_out = yl_in + if l == d { sign * self.h } else { 0.0 };
                let u_in = yl_in + self.u.phi[l][vin] + shift_u;
                let u_out = yl_out + self.u.phi[l][vout] + shift_u;
                let du = su * (u_out - u_in) / self.h;
                let uf = 0.5 * (u_in + u_out);
                gauge[l] += h2 * du;
                for k in 0..3 {
                    let yk_in = self.y(vin, k);
                    let yk_out = yk_in + if k == d { sign * self.h } else { 0.0 };
                    let v_in = yk_in + self.v.phi[k][vin] + shift_v;
                    let v_out = yk_out + self.v.phi[k][vout] + shift_v;
                    let dv = sv * (v_out - v_in) / self.h;
                    let vf = 0.5 * (v_in + v_out);
                    m[l][k] += h2 * (vf * du - uf * dv);
                }
            }
        });
        MEvaluation { m: MTensor(m), gauge_check: gauge.iter().fold(0.0, |a, b| a.max(b.abs())) }
    }
}

fn faces<'a>(sc: &SupercellMedium, sol: &'a CorrectorSolution) -> Result<Faces<'a>> {
    let c0 = sc.origin_cell();
    let (j, minus) = sol
        .minus
        .as_ref()
        .ok_or_else(|| Error::Config("M needs the modified corrector of the origin cell".into()))?;
    if *j != c0 {
        return Err(Error::Config(format!("modified corrector removes {j:?}, M needs {c0:?}")));
    }
    let n = sc.per_cell;
    Ok(Faces { dims: sol.dims, h: sol.h, lo: [c0[0] * n, c0[1] * n, c0[2] * n], n, u: minus, v: &sol.full })
}

/// `M` of the origin inclusion from the cell-face form.
pub fn m_tensor(sc: &SupercellMedium, sol: &CorrectorSolution) -> Result<MEvaluation> {
    Ok(faces(sc, sol)?.m_and_gauge(0.0, 0.0))
}

/// `M` from a corrector and a modified corrector (origin removed) solved on
/// the same supercell grid.
pub fn m_tensor_from(sc: &SupercellMedium, full: &CorrectorFields, minus: &CorrectorFields) -> Result<MEvaluation> {
    if full.perforation.dims != minus.perforation.dims || full.perforation.dims != sc.dims() {
        return Err(Error::GridMismatch("corrector and modified corrector grids differ".into()));
    }
    let c0 = sc.origin_cell();
    let n = sc.per_cell;
    let f = Faces { dims: sc.dims(), h: sc.h(), lo: [c0[0] * n, c0[1] * n, c0[2] * n], n, u: minus, v: full };
    Ok(f.m_and_gauge(0.0, 0.0))
}

/// `M` after adding constants to `phi` and `phi^-`.
pub fn m_tensor_shifted(sc: &SupercellMedium, sol: &CorrectorSolution, shift_phi: f64, shift_phi_minus: f64) -> Result<MTensor> {
    Ok(faces(sc, sol)?.m_and_gauge(shift_phi, shift_phi_minus).m)
}

/// `M` by product-Gauss quadrature on the sphere of radius `radius` around
/// the origin inclusion, with trilinearly interpolated centered-difference
/// gradients. Fails if an interpolation stencil touches a cut voxel.
pub fn m_tensor_sphere(sc: &SupercellMedium, sol: &CorrectorSolution, radius: f64, n_polar: usize) -> Result<MTensor> {
    let f = faces(sc, sol)?;
    let c0 = sc.origin_cell();
    let center = sc.center(c0);
    let local = [center[0] - c0[0] as f64, center[1] - c0[1] as f64, center[2] - c0[2] as f64];
    let h = sol.h;
    let dims = sol.dims;
    let rule = sphere_rule(n_polar, 2 * n_polar);
    // U, V values and gradients at a point: trilinear weights over voxel centers
    let sample = |fields: &CorrectorFields, comp: usize, x: [f64; 3]| -> Result<(f64, [f64; 3])> {
        let mut base = [0i64; 3];
        let mut t = [0.0; 3];
        for d in 0..3 {
            let s = x[d] / h - 0.5;
            let fl = s.floor();
            t[d] = s - fl;
            base[d] = fl as i64;
        }
        let wrap = |i: i64, d: usize| i.rem_euclid(dims.0[d] as i64) as usize;
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        for c in 0..8 {
            let mut ijk = [0usize; 3];
            let mut w = 1.0;
            for d in 0..3 {
                let up = (c >> d) & 1;
                ijk[d] = wrap(base[d] + up as i64, d);
                w *= if up == 1 { t[d] } else { 1.0 - t[d] };
            }
            let v = dims.idx(ijk[0], ijk[1], ijk[2]);
            for d in 0..3 {
                for s in [true, false] {
                    if fields.perforation.fluid[dims.wrap(v, d, s)] < 1.0 {
                        return Err(Error::Geometry(format!("sphere stencil at {x:?} touches the perforation")));
                    }
                }
            }
            val += w * fields.phi[comp][v];
            for d in 0..3 {
                let p = dims.wrap(v, d, true);
                let m = dims.wrap(v, d, false);
                grad[d] += w * (fields.phi[comp][p] - fields.phi[comp][m]) / (2.0 * h);
            }
        }
        Ok((val, grad))
    };
    let mut m = [[0.0; 3]; 3];
    let lo = [f.lo[0] as f64 * h, f.lo[1] as f64 * h, f.lo[2] as f64 * h];
    for (nrm, w) in &rule {
        let y = [local[0] + radius * nrm[0], local[1] + radius * nrm[1], local[2] + radius * nrm[2]];
        let x = [lo[0] + y[0], lo[1] + y[1], lo[2] + y[2]];
        let ds = w * radius * radius;
        for l in 0..3 {
            let (pu, gu) = sample(f.u, l, x)?;
            let u = y[l] + pu;
            let dudn = nrm[l] + gu[0] * nrm[0] + gu[1] * nrm[1] + gu[2] * nrm[2];
            for k in 0..3 {
                let (pv, gv) = sample(f.v, k, x)?;
                let v = y[k] + pv;
                let dvdn = nrm[k] + gv[0] * nrm[0] + gv[1] * nrm[1] + gv[2] * nrm[2];
                m[l][k] += ds * (v * dudn - u * dvdn);
            }
        }
    }
    Ok(MTensor(m))
}
