//! Seven-point finite-volume Helmholtz operator with stretched coordinates.
//!
//! `div(A grad u) + k0^2 mu u` in the PML-stretched form
//! `sum_d d_d((S / s_d^2) A_dd d_d u) + k0^2 mu S u`, `S = s_1 s_2 s_3`.
//! Face coefficients are shared by the two voxels of a face, so the matrix
//! is complex symmetric. Off-diagonal entries of `A` use the wide centered
//! stencil `d_d(A_de (u_{+e} - u_{-e}) / 2h)` and are only allowed outside
//! the PML.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helmholtz::grid::HelmholtzGrid;

type C = Complex64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceAverage {
    #[default]
    Harmonic,
    Arithmetic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `u = 0` on the outer face.
    #[default]
    Dirichlet,
    /// Zero normal flux.
    Neumann,
}

/// Voxel coefficients of `div(A grad u) + k0^2 mu u`.
#[derive(Clone, Debug)]
pub enum Permittivity {
    Isotropic(Vec<C>),
    /// Diagonal entries per voxel and the off-diagonal `(A01, A02, A12)`.
    Anisotropic { diag: Vec<[C; 3]>, cross: Vec<[f64; 3]> },
}

impl Permittivity {
    fn diag(&self, v: usize, d: usize) -> C {
        match self {
            Permittivity::Isotropic(a) => a[v],
            Permittivity::Anisotropic { diag, .. } => diag[v][d],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Coefficients {
    pub a: Permittivity,
    pub mu: Vec<C>,
}

#[derive(Clone, Debug)]
pub struct HelmholtzOperator {
    pub grid: HelmholtzGrid,
    pub k0: f64,
    /// Coupling across the `+d` face of each voxel, with `1/h^2`.
    faces: [Vec<C>; 3],
    diag: Vec<C>,
    /// Off-diagonal `A` entries times `1/(4h^2)`.
    cross: Option<Vec<[f64; 3]>>,
    /// `S` at voxel centers, the factor applied to the right-hand side.
    jacobian: Vec<C>,
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn average(kind: FaceAverage, a: C, b: C) -> C {
    match kind {
        FaceAverage::Harmonic => {
            if a == C::new(0.0, 0.0) || b == C::new(0.0, 0.0) {
                C::new(0.0, 0.0)
            } else {
                2.0 * a * b / (a + b)
            }
        }
        FaceAverage::Arithmetic => 0.5 * (a + b),
    }
}

impl HelmholtzOperator {
    pub fn assemble(grid: &HelmholtzGrid, k0: f64, coef: &Coefficients, avg: FaceAverage, bc: [Boundary; 3]) -> Result<Self> {
        let n = grid.len();
        if coef.mu.len() != n {
            return Err(Error::GridMismatch(format!("{} coefficients for {n} voxels", coef.mu.len())));
        }
        let dims = grid.dims;
        let h = grid.h;
        let h2 = h * h;
        let centers: [Vec<C>; 3] = std::array::from_fn(|d| {
            (0..dims.0[d]).map(|i| grid.stretch(d, grid.origin[d] + (i as f64 + 0.5) * h, k0)).collect()
        });
        // stretch on the +d face of index i (i = -1 is the low boundary face)
        let face_s = |d: usize, i: i64| grid.stretch(d, grid.origin[d] + (i + 1) as f64 * h, k0);
        let mut faces: [Vec<C>; 3] = std::array::from_fn(|_| vec![C::new(0.0, 0.0); n]);
        let mut diag = vec![C::new(0.0, 0.0); n];
        let mut jacobian = vec![C::new(0.0, 0.0); n];
        for v in 0..n {
            let c = dims.coords(v);
            let s = [centers[0][c[0]], centers[1][c[1]], centers[2][c[2]]];
            jacobian[v] = s[0] * s[1] * s[2];
            diag[v] = k0 * k0 * coef.mu[v] * jacobian[v];
        }
        for d in 0..3 {
            let stride = dims.stride(d);
            let (e1, e2) = ((d + 1) % 3, (d + 2) % 3);
            for v in 0..n {
                let c = dims.coords(v);
                let trans = centers[e1][c[e1]] * centers[e2][c[e2]];
                let top = c[d] + 1 == dims.0[d];
                let a_face = if top {
                    // ghost face: Dirichlet puts u = 0 on the face, half a voxel away
                    match bc[d] {
                        Boundary::Dirichlet => 2.0 * coef.a.diag(v, d),
                        Boundary::Neumann => C::new(0.0, 0.0),
                    }
                } else {
                    average(avg, coef.a.diag(v, d), coef.a.diag(v + stride, d))
                };
                let w = a_face * trans / face_s(d, c[d] as i64) / h2;
                faces[d][v] = w;
                diag[v] -= w;
                if !top {
                    diag[v + stride] -= w;
                }
                if c[d] == 0 && bc[d] == Boundary::Dirichlet {
                    diag[v] -= 2.0 * coef.a.diag(v, d) * trans / face_s(d, -1) / h2;
                }
            }
            for v in 0..n {
                if dims.coords(v)[d] + 1 == dims.0[d] {
                    faces[d][v] = C::new(0.0, 0.0);
                }
            }
        }
        let cross = match &coef.a {
            Permittivity::Isotropic(_) => None,
            Permittivity::Anisotropic { cross, .. } => {
                for (v, x) in cross.iter().enumerate() {
                    if x.iter().any(|e| *e != 0.0) && grid.in_pml(v) {
                        return Err(Error::Config("anisotropic coefficients reach into the PML".into()));
                    }
                }
                Some(cross.iter().map(|x| x.map(|e| e / (4.0 * h2))).collect())
            }
        };
        Ok(HelmholtzOperator { grid: grid.clone(), k0, faces, diag, cross, jacobian })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diagonal(&self) -> &[C] {
        &self.diag
    }

    /// `S f`, the right-hand side for a source `f`.
    pub fn rhs(&self, f: &[C]) -> Vec<C> {
        f.iter().zip(&self.jacobian).map(|(a, s)| a * s).collect()
    }

    pub fn apply(&self, x: &[C], y: &mut [C]) {
        let dims = self.grid.dims;
        let [nx, ny, nz] = dims.0;
        let (sx, sy) = (ny * nz, nz);
        let f = &self.faces;
        y.par_chunks_mut(sx).enumerate().for_each(|(i, slab)| {
            for j in 0..ny {
                for k in 0..nz {
                    let v = i * sx + j * sy + k;
                    let mut acc = self.diag[v] * x[v];
                    if i + 1 < nx {
                        acc += f[0][v] * x[v + sx];
                    }
                    if i > 0 {
                        acc += f[0][v - sx] * x[v - sx];
                    }
                    if j + 1 < ny {
                        acc += f[1][v] * x[v + sy];
                    }
                    if j > 0 {
                        acc += f[1][v - sy] * x[v - sy];
                    }
                    if k + 1 < nz {
                        acc += f[2][v] * x[v + 1];
                    }
                    if k > 0 {
                        acc += f[2][v - 1] * x[v - 1];
                    }
                    slab[j * sy + k] = acc;
                }
            }
        });
        if let Some(cross) = &self.cross {
            let coords_ok = |c: [usize; 3], d: usize, s: i64| {
                let t = c[d] as i64 + s;
                t >= 0 && (t as usize) < dims.0[d]
            };
            y.par_iter_mut().enumerate().for_each(|(v, yv)| {
                let c = dims.coords(v);
                let mut acc = C::new(0.0, 0.0);
                for (p, &(d, e)) in PAIRS.iter().enumerate() {
                    for sd in [-1i64, 1] {
                        if !coords_ok(c, d, sd) {
                            continue;
                        }
                        let vd = (v as i64 + sd * dims.stride(d) as i64) as usize;
                        for se in [-1i64, 1] {
                            if !coords_ok(c, e, se) {
                                continue;
                            }
                            let ve = (v as i64 + se * dims.stride(e) as i64) as usize;
                            let w = (vd as i64 + se * dims.stride(e) as i64) as usize;
                            let coef = (sd * se) as f64 * (cross[vd][p] + cross[ve][p]);
                            acc += coef * x[w];
                        }
                    }
                }
                *yv += acc;
            });
        }
    }

    /// Row `v` as `(column, value)` pairs; used to build explicit matrices.
    pub fn row(&self, v: usize) -> Vec<(usize, C)> {
        let dims = self.grid.dims;
        let c = dims.coords(v);
        let mut out = vec![(v, self.diag[v])];
        for d in 0..3 {
            let s = dims.stride(d);
            if c[d] + 1 < dims.0[d] {
                out.push((v + s, self.faces[d][v]));
            }
            if c[d] > 0 {
                out.push((v - s, self.faces[d][v - s]));
            }
        }
        if let Some(cross) = &self.cross {
            let step = |v: usize, d: usize, s: i64| -> Option<usize> {
                let t = dims.coords(v)[d] as i64 + s;
                (t >= 0 && (t as usize) < dims.0[d]).then(|| (v as i64 + s * dims.stride(d) as i64) as usize)
            };
            for (p, &(d, e)) in PAIRS.iter().enumerate() {
                for sd in [-1i64, 1] {
                    for se in [-1i64, 1] {
                        let (Some(vd), Some(ve)) = (step(v, d, sd), step(v, e, se)) else { continue };
                        let w = step(vd, e, se).expect("corner inside the grid");
                        let coef = (sd * se) as f64 * (cross[vd][p] + cross[ve][p]);
                        out.push((w, C::new(coef, 0.0)));
                    }
                }
            }
        }
        out
    }
}
