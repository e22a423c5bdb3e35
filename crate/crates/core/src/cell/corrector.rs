//! Corrector and modified corrector on a periodic supercell.
//!
//! `phi_i` solves `div(1_fluid (e_i + grad phi_i)) = 0` with zero normal
//! flux on the inclusions, periodic on the supercell, zero fluid mean.
//! `phi_i^{j,-}` is the same problem with the inclusion of cell `j` removed.

use rayon::prelude::*;

use crate::cell::laplace::{pcg, CgOptions, CgReport, FaceOperator};
use crate::cell::supercell::{FaceWeight, Perforation, SupercellMedium};
use crate::error::Result;
use crate::grid::Dims;
use crate::stats::ordered_sum;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CorrectorOptions {
    pub cg: CgOptions,
    pub weight: FaceWeight,
}


/// Three corrector components on one perforation.
#[derive(Clone, Debug)]
pub struct CorrectorFields {
    pub perforation: Perforation,
    pub phi: [Vec<f64>; 3],
    pub reports: Vec<CgReport>,
}

#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub dims: Dims,
    pub h: f64,
    pub full: CorrectorFields,
    /// Modified corrector and the cell that was removed.
    pub minus: Option<([usize; 3], CorrectorFields)>,
}

impl CorrectorFields {
    pub fn residual(&self) -> f64 {
        self.reports.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    /// Flux of `1_fluid (e_i + grad phi_i)` through the `+d` face of `v`.
    pub fn face_flux(&self, i: usize, d: usize, v: usize) -> f64 {
        let p = &self.perforation;
        let w = p.dims.wrap(v, d, true);
        let unit = if i == d { 1.0 } else { 0.0 };
        p.faces[d][v] * (unit + (self.phi[i][w] - self.phi[i][v]) / p.h)
    }

    /// Max-norm discrete divergence of the flux, relative to the divergence
    /// of `1_fluid e_i` alone.
    pub fn divergence(&self, i: usize) -> f64 {
        let p = &self.perforation;
        let dims = p.dims;
        let (num, den) = (0..dims.len())
            .into_par_iter()
            .map(|v| {
                let mut div = 0.0;
                let mut src = 0.0;
                for d in 0..3 {
                    let m = dims.wrap(v, d, false);
                    div += self.face_flux(i, d, v) - self.face_flux(i, d, m);
                    if d == i {
                        src += p.faces[d][v] - p.faces[d][m];
                    }
                }
                (div.abs() / p.h, src.abs() / p.h)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    /// Volume average of `1_fluid (e_i + grad phi_i)`: entry `[d][i]`.
    pub fn mean_flux(&self) -> [[f64; 3]; 3] {
        let n = self.perforation.dims.len();
        let mut q = [[0.0; 3]; 3];
        for (d, row) in q.iter_mut().enumerate() {
            for (i, e) in row.iter_mut().enumerate() {
                let s: f64 = ordered_sum(n, |v| self.face_flux(i, d, v));
                *e = s / n as f64;
            }
        }
        q
    }
}

fn zero_fluid_mean(phi: &mut [f64], fluid: &[f64], op: &FaceOperator) {
    let w: f64 = fluid.iter().sum();
    let m: f64 = phi.iter().zip(fluid).map(|(a, f)| a * f).sum::<f64>() / w;
    for (v, p) in phi.iter_mut().enumerate() {
        if op.active(v) {
            *p -= m;
        }
    }
}

/// Solve the three components on a given perforation, warm-started from `guess`.
pub fn solve_on(p: Perforation, guess: Option<&[Vec<f64>; 3]>, cg: CgOptions) -> Result<CorrectorFields> {
    let op = FaceOperator::from_perforation(&p);
    let h = p.h;
    let out: Vec<Result<(Vec<f64>, CgReport)>> = (0..3)
        .into_par_iter()
        .map(|i| {
            let b: Vec<f64> = op.unit_flux_divergence(i).into_iter().map(|s| h * s).collect();
            let mut x = match guess {
                Some(g) => g[i].clone(),
                None => vec![0.0; p.dims.len()],
            };
            let rep = pcg(&op, &b, &mut x, cg)?;
            zero_fluid_mean(&mut x, &p.fluid, &op);
            Ok((x, rep))
        })
        .collect();
    let mut phi: [Vec<f64>; 3] = Default::default();
    let mut reports = Vec::with_capacity(3);
    for (i, r) in out.into_iter().enumerate() {
        let (x, rep) = r?;
        phi[i] = x;
        reports.push(rep);
    }
    Ok(CorrectorFields { perforation: p, phi, reports })
}

pub fn solve_corrector(sc: &SupercellMedium, opts: CorrectorOptions) -> Result<CorrectorSolution> {
    sc.validate()?;
    let p = Perforation::of_supercell(sc, None, opts.weight);
    let full = solve_on(p, None, opts.cg)?;
    Ok(CorrectorSolution { dims: sc.dims(), h: sc.h(), full, minus: None })
}

/// Add `phi^{j,-}` to an existing solution.
pub fn solve_modified_corrector(
    sc: &SupercellMedium,
    sol: &mut CorrectorSolution,
    j: [usize; 3],
    opts: CorrectorOptions,
) -> Result<()> {
    let p = Perforation::of_supercell(sc, Some(j), opts.weight);
    let f = solve_on(p, Some(&sol.full.phi), opts.cg)?;
    sol.minus = Some((j, f));
    Ok(())
}

/// Periodic minimum-image distance between points of an `l`-periodic box.
pub fn periodic_distance(a: [f64; 3], b: [f64; 3], l: f64) -> f64 {
    let mut s = 0.0;
    for d in 0..3 {
        let mut x = (a[d] - b[d]).rem_euclid(l);
        if x > l / 2.0 {
            x -= l;
        }
        s += x * x;
    }
    s.sqrt()
}

/// `|grad phi^{j,-} - grad phi|` (all components, Frobenius) at fully
/// fluid voxels, grouped by distance to the center of cell `j`.
pub fn mismatch_profile(sc: &SupercellMedium, sol: &CorrectorSolution) -> Vec<(f64, f64)> {
    let Some((j, minus)) = &sol.minus else {
        return vec![];
    };
    let dims = sol.dims;
    let h = sol.h;
    let cj = [j[0] as f64 + 0.5, j[1] as f64 + 0.5, j[2] as f64 + 0.5];
    let fluid = &sol.full.perforation.fluid;
    (0..dims.len())
        .into_par_iter()
        .filter_map(|v| {
            let mut ok = fluid[v] == 1.0;
            for d in 0..3 {
                ok &= fluid[dims.wrap(v, d, true)] == 1.0 && fluid[dims.wrap(v, d, false)] == 1.0;
            }
            if !ok {
                return None;
            }
            let c = dims.coords(v);
            let x = [(c[0] as f64 + 0.5) * h, (c[1] as f64 + 0.5) * h, (c[2] as f64 + 0.5) * h];
            let mut s = 0.0;
            for i in 0..3 {
                for d in 0..3 {
                    let p = dims.wrap(v, d, true);
                    let m = dims.wrap(v, d, false);
                    let g = (minus.phi[i][p] - minus.phi[i][m] - sol.full.phi[i][p] + sol.full.phi[i][m]) / (2.0 * h);
                    s += g * g;
                }
            }
            Some((periodic_distance(x, cj, sc.l as f64), s.sqrt()))
        })
        .collect()
}

/// Largest mismatch at distance at least `l / 2` from the removed cell.
pub fn far_field_mismatch(sc: &SupercellMedium, sol: &CorrectorSolution) -> f64 {
    let half = sc.l as f64 / 2.0;
    mismatch_profile(sc, sol).into_iter().filter(|(d, _)| *d >= half).map(|(_, m)| m).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::InclusionParams;
    use num_complex::Complex64;

    fn inc(theta: [f64; 3], rho: f64) -> InclusionParams {
        InclusionParams { theta, rho, a: Complex64::new(2.0, 1.0) }
    }

    #[test]
    fn empty_supercell_has_zero_corrector() {
        let sc = SupercellMedium::single(3, 8, inc([0.5; 3], 0.0)).unwrap();
        let sol = solve_corrector(&sc, CorrectorOptions::default()).unwrap();
        assert!(sol.full.phi.iter().all(|p| p.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn only_removed_cell_gives_zero_modified_corrector() {
        let sc = SupercellMedium::single(3, 12, inc([0.5; 3], 0.35)).unwrap();
        let mut sol = solve_corrector(&sc, CorrectorOptions::default()).unwrap();
        solve_modified_corrector(&sc, &mut sol, sc.origin_cell(), CorrectorOptions::default()).unwrap();
        let (_, m) = sol.minus.as_ref().unwrap();
        assert!(m.phi.iter().all(|p| p.iter().all(|v| *v == 0.0)));
        assert!(sol.full.phi[0].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn conservation_and_gauge() {
        let sc = SupercellMedium::single(3, 12, inc([0.45, 0.5, 0.55], 0.35)).unwrap();
        let opts = CorrectorOptions { cg: CgOptions { tol: 1e-10, max_iter: 5000 }, ..Default::default() };
        let sol = solve_corrector(&sc, opts).unwrap();
        for i in 0..3 {
            assert!(sol.full.divergence(i) <= 10.0 * 1e-10);
            let f = &sol.full.perforation.fluid;
            let m: f64 = sol.full.phi[i].iter().zip(f).map(|(a, b)| a * b).sum();
            assert!(m.abs() < 1e-9);
        }
    }
}
