//! The modified corrector from the corrector and the perforated Green's
//! function, without solving the modified problem.
//!
//! With `V_i = y_i + phi_i` and `G_j(., x)` the Green's function of the
//! medium without inclusion `j`,
//! `phi_i^{j,-}(x) - phi_i(x) = -int_{dD^j} V_i dG_j/dn dS`. Both `V_i`
//! and `G_j` are harmonic in the fluid part of cell `j` and `dV_i/dn = 0`
//! on the sphere, so the integral equals
//! `-int_{d cell_j} (V_i dG_j/dnu - G_j dV_i/dnu) dS`, which is what is
//! evaluated here with discrete face fluxes. On the periodic supercell the
//! compensating sink of `G_j` adds an `x`-independent constant.

use rayon::prelude::*;

use crate::cell::corrector::CorrectorFields;
use crate::cell::green::{perforated_green, trilinear_weights, GreenDomain, GreenField};
use crate::cell::laplace::CgOptions;
use crate::cell::supercell::{FaceWeight, SupercellMedium};
use crate::error::{Error, Result};

/// `-int_{d cell_j} (V_i dG/dnu - G dV_i/dnu)` for the three components.
pub fn cell_face_functional(sc: &SupercellMedium, v: &CorrectorFields, j: [usize; 3], g: &GreenField) -> [f64; 3] {
    let n = sc.per_cell as i64;
    let h = sc.h();
    let vd = v.perforation.dims;
    let gd = g.field.dims;
    // offset of the supercell origin inside the Green grid
    let off = (-g.field.origin[0] / h).round() as i64;
    let at = |dims: crate::grid::Dims, base: i64, c: [i64; 3]| -> usize {
        let w = |x: i64, d: usize| (x + base).rem_euclid(dims.0[d] as i64) as usize;
        dims.idx(w(c[0], 0), w(c[1], 1), w(c[2], 2))
    };
    let lo = [j[0] as i64 * n, j[1] as i64 * n, j[2] as i64 * n];
    let mut out = [0.0; 3];
    for d in 0..3 {
        let (d1, d2) = ((d + 1) % 3, (d + 2) % 3);
        for (edge, sign) in [(0i64, -1.0f64), (n - 1, 1.0)] {
            for a in 0..n {
                for b in 0..n {
                    let mut cin = [0i64; 3];
                    cin[d] = lo[d] + edge;
                    cin[d1] = lo[d1] + a;
                    cin[d2] = lo[d2] + b;
                    let mut cout = cin;
                    cout[d] += sign as i64;
                    let (vi, vo) = (at(vd, 0, cin), at(vd, 0, cout));
                    let (gi, go) = (at(gd, off, cin), at(gd, off, cout));
                    // conductance of the shared face
                    let (fv, fg) = if sign > 0.0 { (vi, gi) } else { (vo, go) };
                    let sv = v.perforation.faces[d][fv];
                    let sg = g.perforation.faces[d][fg];
                    let dg = sg * (g.field.data[go] - g.field.data[gi]) / h;
                    let gf = 0.5 * (g.field.data[go] + g.field.data[gi]);
                    for (i, o) in out.iter_mut().enumerate() {
                        let yi = (cin[i] - lo[i]) as f64 * h + 0.5 * h;
                        let yo = yi + if i == d { sign * h } else { 0.0 };
                        let v_in = yi + v.phi[i][vi];
                        let v_out = yo + v.phi[i][vo];
                        let dv = sv * (v_out - v_in) / h;
                        let vf = 0.5 * (v_in + v_out);
                        *o -= h * h * (vf * dg - gf * dv);
                    }
                }
            }
        }
    }
    out
}

/// Values of `phi^{j,-} - phi` at the probes, one Green solve per probe.
pub fn modified_corrector_via_representation(
    sc: &SupercellMedium,
    phi: &CorrectorFields,
    j: [usize; 3],
    probes: &[[f64; 3]],
    domain: GreenDomain,
    weight: FaceWeight,
    cg: CgOptions,
) -> Result<Vec<[f64; 3]>> {
    let dims = phi.perforation.dims;
    for p in probes {
        for (v, w) in trilinear_weights(dims, sc.h(), *p)? {
            if w > 0.0 && phi.perforation.fluid[v] < 1.0 {
                return Err(Error::Geometry(format!("probe {p:?} lies in an inclusion")));
            }
        }
        let inside = (0..3).all(|d| p[d] >= j[d] as f64 && p[d] <= j[d] as f64 + 1.0);
        if inside {
            return Err(Error::Geometry(format!("probe {p:?} lies in the removed cell")));
        }
    }
    probes
        .par_iter()
        .map(|p| {
            let g = perforated_green(sc, domain, *p, &[j], weight, cg)?;
            Ok(cell_face_functional(sc, phi, j, &g))
        })
        .collect()
}

/// Trilinear value of `phi^{j,-}_i - phi_i` at a point of the supercell.
pub fn direct_difference(full: &CorrectorFields, minus: &CorrectorFields, h: f64, x: [f64; 3]) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (v, w) in trilinear_weights(full.perforation.dims, h, x)? {
        for (i, o) in out.iter_mut().enumerate() {
            *o += w * (minus.phi[i][v] - full.phi[i][v]);
        }
    }
    Ok(out)
}
