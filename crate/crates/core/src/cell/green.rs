//! Green's function of the Laplacian in the perforated medium.
//!
//! `-Lap G(., x0) = delta_{x0}` in the fluid, zero normal flux on the
//! inclusions that remain. Two truncations: a box holding the supercell
//! cells padded by free space (Dirichlet or monopole Robin condition on the
//! outer faces), or the periodic supercell itself with a uniform
//! compensating sink in the fluid.

use serde::{Deserialize, Serialize};

use crate::cell::laplace::{pcg, CgOptions, CgReport, FaceOperator};
use crate::cell::supercell::{perforate, FaceWeight, Perforation, SupercellMedium};
use crate::error::{Error, Result};
use crate::grid::{Dims, RealField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBc {
    /// `G = 0` on the outer faces.
    Dirichlet,
    /// `dG/dn = -(n . rhat / r) G`, exact for the free-space monopole.
    Robin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GreenDomain {
    /// The `L^3` cells padded by `pad` empty cells on every side.
    Box { pad: usize, bc: OuterBc },
    Periodic,
}

#[derive(Clone, Debug)]
pub struct GreenField {
    /// Values on voxel centers; `origin` is in supercell coordinates.
    pub field: RealField,
    pub perforation: Perforation,
    pub source: [f64; 3],
    pub report: CgReport,
}

/// Solve for `G(., source)` with the inclusions of `removed` cells dropped.
pub fn perforated_green(
    sc: &SupercellMedium,
    domain: GreenDomain,
    source: [f64; 3],
    removed: &[[usize; 3]],
    weight: FaceWeight,
    cg: CgOptions,
) -> Result<GreenField> {
    sc.validate()?;
    let h = sc.h();
    let n = sc.per_cell;
    let (pad, periodic) = match domain {
        GreenDomain::Box { pad, .. } => (pad, false),
        GreenDomain::Periodic => (0, true),
    };
    let side = (sc.l + 2 * pad) * n;
    let dims = Dims::cube(side);
    let shift = pad as f64;
    let balls: Vec<_> = sc
        .cell_coords()
        .filter(|c| !removed.contains(c))
        .map(|c| {
            let x = sc.center(c);
            ([x[0] + shift, x[1] + shift, x[2] + shift], sc.cell(c).rho)
        })
        .collect();
    let perf = perforate(dims, h, &balls, weight, periodic);
    let origin = [-shift; 3];
    let src_grid = [source[0] + shift, source[1] + shift, source[2] + shift];
    let spread = trilinear_weights(dims, h, src_grid)?;
    for &(v, w) in &spread {
        if w > 0.0 && perf.fluid[v] < 1.0 {
            return Err(Error::Geometry(format!("source {source:?} touches a cut or solid voxel")));
        }
    }
    let src_center = src_grid;

    let mut extra = vec![0.0; dims.len()];
    if let GreenDomain::Box { bc, .. } = domain {
        for v in 0..dims.len() {
            let c = dims.coords(v);
            let x = [(c[0] as f64 + 0.5) * h, (c[1] as f64 + 0.5) * h, (c[2] as f64 + 0.5) * h];
            for d in 0..3 {
                for (at_edge, sign) in [(c[d] == 0, -1.0), (c[d] + 1 == side, 1.0)] {
                    if !at_edge {
                        continue;
                    }
                    extra[v] += match bc {
                        OuterBc::Dirichlet => 2.0,
                        OuterBc::Robin => {
                            // face center
                            let mut f = x;
                            f[d] += sign * 0.5 * h;
                            let r = ((f[0] - src_center[0]).powi(2)
                                + (f[1] - src_center[1]).powi(2)
                                + (f[2] - src_center[2]).powi(2))
                            .sqrt();
                            let ndotr = sign * (f[d] - src_center[d]) / r;
                            h * ndotr / r
                        }
                    };
                }
            }
        }
    }
    let op = FaceOperator::new(dims, h, perf.faces.clone(), extra);
    let mut b = vec![0.0; dims.len()];
    for &(v, w) in &spread {
        b[v] += w / h;
    }
    if periodic {
        let w: f64 = perf.fluid.iter().sum();
        for (bv, f) in b.iter_mut().zip(&perf.fluid) {
            *bv -= f / w / h;
        }
    }
    let mut x = vec![0.0; dims.len()];
    let report = pcg(&op, &b, &mut x, cg)?;
    if periodic {
        let w: f64 = perf.fluid.iter().sum();
        let m: f64 = x.iter().zip(&perf.fluid).map(|(a, f)| a * f).sum::<f64>() / w;
        for (v, xv) in x.iter_mut().enumerate() {
            if op.active(v) {
                *xv -= m;
            }
        }
    }
    let field = RealField { dims, h, origin, data: x };
    Ok(GreenField { field, perforation: perf, source, report })
}

/// Voxels and weights of trilinear interpolation at `x` (grid coordinates,
/// periodic wrap).
pub fn trilinear_weights(dims: Dims, h: f64, x: [f64; 3]) -> Result<Vec<(usize, f64)>> {
    let mut base = [0i64; 3];
    let mut t = [0.0; 3];
    for d in 0..3 {
        let s = x[d] / h - 0.5;
        if !(s > -1.0 && s < dims.0[d] as f64) {
            return Err(Error::Config(format!("point {x:?} outside the grid")));
        }
        let f = s.floor();
        t[d] = s - f;
        base[d] = f as i64;
    }
    let mut out = Vec::with_capacity(8);
    for c in 0..8 {
        let mut ijk = [0usize; 3];
        let mut w = 1.0;
        for d in 0..3 {
            let up = (c >> d) & 1;
            ijk[d] = (base[d] + up as i64).rem_euclid(dims.0[d] as i64) as usize;
            w *= if up == 1 { t[d] } else { 1.0 - t[d] };
        }
        out.push((dims.idx(ijk[0], ijk[1], ijk[2]), w));
    }
    Ok(out)
}

/// Shell averages of `G` and `|grad G|` around the source at fully fluid
/// voxels, for radii in `[r_min, r_max]` split into `bins` log-spaced shells.
pub fn radial_profile(g: &GreenField, r_min: f64, r_max: f64, bins: usize) -> Vec<(f64, f64, f64)> {
    let f = &g.field;
    let dims = f.dims;
    let h = f.h;
    let mut acc = vec![(0.0, 0.0, 0.0, 0usize); bins];
    let lr = (r_max / r_min).ln();
    for v in 0..dims.len() {
        let c = dims.coords(v);
        if (0..3).any(|d| c[d] == 0 || c[d] + 1 == dims.0[d]) {
            continue;
        }
        let mut ok = g.perforation.fluid[v] == 1.0;
        for d in 0..3 {
            ok &= g.perforation.fluid[dims.wrap(v, d, true)] == 1.0 && g.perforation.fluid[dims.wrap(v, d, false)] == 1.0;
        }
        if !ok {
            continue;
        }
        let x = f.center(v);
        let r = ((x[0] - g.source[0]).powi(2) + (x[1] - g.source[1]).powi(2) + (x[2] - g.source[2]).powi(2)).sqrt();
        if r < r_min || r >= r_max {
            continue;
        }
        let b = (((r / r_min).ln() / lr) * bins as f64) as usize;
        let mut gn = 0.0;
        for d in 0..3 {
            let gd = (f.data[dims.wrap(v, d, true)] - f.data[dims.wrap(v, d, false)]) / (2.0 * h);
            gn += gd * gd;
        }
        let e = &mut acc[b.min(bins - 1)];
        e.0 += r;
        e.1 += f.data[v];
        e.2 += gn.sqrt();
        e.3 += 1;
    }
    acc.into_iter()
        .filter(|e| e.3 > 0)
        .map(|e| {
            let k = e.3 as f64;
            (e.0 / k, e.1 / k, e.2 / k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::InclusionParams;
    use num_complex::Complex64;

    #[test]
    fn free_space_kernel() {
        let empty = InclusionParams { theta: [0.5; 3], rho: 0.0, a: Complex64::new(1.0, 1.0) };
        let sc = SupercellMedium::new(3, 8, vec![empty; 27]).unwrap();
        let dom = GreenDomain::Box { pad: 1, bc: OuterBc::Robin };
        let g = perforated_green(&sc, dom, [1.5, 1.5, 1.5], &[], FaceWeight::Aperture, CgOptions { tol: 1e-10, max_iter: 5000 })
            .unwrap();
        for (r, gv, _) in radial_profile(&g, 0.5, 1.5, 4) {
            let exact = 1.0 / (4.0 * std::f64::consts::PI * r);
            assert!((gv - exact).abs() < 0.05 * exact, "r={r} G={gv} exact={exact}");
        }
    }
}
