//! Periodic supercells of `L^3` unit cells and their voxel perforation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ball_voxel_fraction, disk_square_fraction};
use crate::grid::Dims;
use crate::medium::{CellWindow, InclusionParams, MediumSample};

/// Minimum number of voxels across an inclusion diameter.
pub const MIN_VOXELS_PER_DIAMETER: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SupercellMedium {
    pub l: usize,
    /// Voxels per cell side.
    pub per_cell: usize,
    /// Inclusions in x-major cell order; `rho = 0` marks an empty cell.
    pub cells: Vec<InclusionParams>,
}

/// How face conductances are derived from the sub-voxel geometry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceWeight {
    /// Open area fraction of each face.
    #[default]
    Aperture,
    /// Harmonic mean of the fluid volume fractions of the two voxels.
    VolumeHarmonic,
}

impl SupercellMedium {
    pub fn new(l: usize, per_cell: usize, cells: Vec<InclusionParams>) -> Result<Self> {
        if cells.len() != l * l * l {
            return Err(Error::Config(format!("supercell needs {} cells, got {}", l * l * l, cells.len())));
        }
        let s = SupercellMedium { l, per_cell, cells };
        s.validate()?;
        Ok(s)
    }

    /// Take the cells of `window` (an `L^3` cube) from a lattice sample.
    pub fn from_sample(sample: &MediumSample, window: CellWindow, per_cell: usize) -> Result<Self> {
        let l = (window.hi[0] - window.lo[0]) as usize;
        if (0..3).any(|d| (window.hi[d] - window.lo[d]) as usize != l) {
            return Err(Error::Config("supercell window must be a cube".into()));
        }
        let mut cells = Vec::with_capacity(l * l * l);
        for j in window.iter() {
            let e = sample.cells.get(&j).ok_or(Error::MissingCell(j))?;
            cells.push(e.params);
        }
        Self::new(l, per_cell, cells)
    }

    /// One inclusion in the origin cell, all other cells empty.
    pub fn single(l: usize, per_cell: usize, inc: InclusionParams) -> Result<Self> {
        let empty = InclusionParams { rho: 0.0, ..inc };
        let mut cells = vec![empty; l * l * l];
        let tmp = SupercellMedium { l, per_cell, cells: vec![] };
        cells[tmp.cell_index(tmp.origin_cell())] = inc;
        Self::new(l, per_cell, cells)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.per_cell == 0 {
            return Err(Error::Config("empty supercell".into()));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if c.rho > 0.0 && 2.0 * c.rho * (self.per_cell as f64) < MIN_VOXELS_PER_DIAMETER {
                return Err(Error::Geometry(format!(
                    "inclusion {i} with rho = {} spans {:.1} voxels; need {MIN_VOXELS_PER_DIAMETER}",
                    c.rho,
                    2.0 * c.rho * self.per_cell as f64
                )));
            }
            if c.rho > 0.0 && c.theta.iter().any(|t| *t <= c.rho || *t >= 1.0 - c.rho) {
                return Err(Error::Geometry(format!("inclusion {i} leaves its cell")));
            }
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / self.per_cell as f64
    }

    pub fn dims(&self) -> Dims {
        Dims::cube(self.l * self.per_cell)
    }

    /// The cell playing the role of the origin: the central one.
    pub fn origin_cell(&self) -> [usize; 3] {
        [self.l / 2; 3]
    }

    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.l + c[1]) * self.l + c[2]
    }

    pub fn cell(&self, c: [usize; 3]) -> &InclusionParams {
        &self.cells[self.cell_index(c)]
    }

    pub fn cell_coords(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let l = self.l;
        (0..l).flat_map(move |i| (0..l).flat_map(move |j| (0..l).map(move |k| [i, j, k])))
    }

    /// Center of the inclusion of cell `c` in supercell coordinates.
    pub fn center(&self, c: [usize; 3]) -> [f64; 3] {
        let p = self.cell(c);
        [c[0] as f64 + p.theta[0], c[1] as f64 + p.theta[1], c[2] as f64 + p.theta[2]]
    }

    /// Copy with the inclusion of cell `c` removed.
    pub fn without(&self, c: [usize; 3]) -> Self {
        let mut s = self.clone();
        let i = s.cell_index(c);
        s.cells[i].rho = 0.0;
        s
    }

    /// Total inclusion volume fraction.
    pub fn volume_fraction(&self) -> f64 {
        let v: f64 = self.cells.iter().map(|c| crate::cell::lambda::ball_volume(c.rho)).sum();
        v / (self.l * self.l * self.l) as f64
    }
}

/// Voxel description of the perforated region.
#[derive(Clone, Debug, PartialEq)]
pub struct Perforation {
    pub dims: Dims,
    pub h: f64,
    /// Conductance of the `+d` face of each voxel, in `[0, 1]`.
    pub faces: [Vec<f64>; 3],
    /// Fluid volume fraction of each voxel.
    pub fluid: Vec<f64>,
}

/// Balls given in grid coordinates (origin at the grid corner).
pub fn perforate(dims: Dims, h: f64, balls: &[([f64; 3], f64)], weight: FaceWeight, periodic: bool) -> Perforation {
    let n = dims.len();
    let mut fluid = vec![1.0; n];
    let mut faces = [vec![1.0; n], vec![1.0; n], vec![1.0; n]];
    let clamp = |x: f64, d: usize| -> i64 {
        let m = dims.0[d] as i64;
        if periodic {
            x as i64
        } else {
            (x as i64).clamp(0, m)
        }
    };
    let wrap_i = |i: i64, d: usize| -> usize { i.rem_euclid(dims.0[d] as i64) as usize };
    for &(c, rho) in balls {
        if rho <= 0.0 {
            continue;
        }
        let lo: Vec<i64> = (0..3).map(|d| clamp(((c[d] - rho) / h).floor(), d)).collect();
        let hi: Vec<i64> = (0..3).map(|d| clamp(((c[d] + rho) / h).ceil(), d)).collect();
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                for k in lo[2]..hi[2] {
                    let f = ball_voxel_fraction(c, rho, [i as f64 * h, j as f64 * h, k as f64 * h], h);
                    if f > 0.0 {
                        let v = dims.idx(wrap_i(i, 0), wrap_i(j, 1), wrap_i(k, 2));
                        fluid[v] = (fluid[v] - f).max(0.0);
                    }
                }
            }
        }
        if weight == FaceWeight::Aperture {
            for d in 0..3 {
                let (d1, d2) = ((d + 1) % 3, (d + 2) % 3);
                for m in lo[d]..=hi[d] {
                    let off = m as f64 * h - c[d];
                    if off.abs() >= rho {
                        continue;
                    }
                    let r = (rho * rho - off * off).sqrt();
                    for a in lo[d1]..hi[d1] {
                        for b in lo[d2]..hi[d2] {
                            let blocked =
                                disk_square_fraction([c[d1], c[d2]], r, [a as f64 * h, b as f64 * h], h);
                            if blocked > 0.0 {
                                // the face at plane m is the +d face of voxel m - 1
                                let mut ijk = [0usize; 3];
                                ijk[d] = wrap_i(m - 1, d);
                                ijk[d1] = wrap_i(a, d1);
                                ijk[d2] = wrap_i(b, d2);
                                if !periodic && (m == 0 || m == dims.0[d] as i64) {
                                    continue;
                                }
                                let v = dims.idx(ijk[0], ijk[1], ijk[2]);
                                faces[d][v] = (faces[d][v] - blocked).max(0.0);
                            }
                        }
                    }
                }
            }
        }
    }
    if weight == FaceWeight::VolumeHarmonic {
        for d in 0..3 {
            for v in 0..n {
                let w = dims.wrap(v, d, true);
                let (a, b) = (fluid[v], fluid[w]);
                faces[d][v] = if a + b > 0.0 { 2.0 * a * b / (a + b) } else { 0.0 };
            }
        }
    }
    if !periodic {
        for d in 0..3 {
            for v in 0..n {
                if dims.coords(v)[d] + 1 == dims.0[d] {
                    faces[d][v] = 0.0;
                }
            }
        }
    }
    Perforation { dims, h, faces, fluid }
}

impl Perforation {
    /// Perforation of a periodic supercell, optionally dropping one cell's inclusion.
    pub fn of_supercell(sc: &SupercellMedium, removed: Option<[usize; 3]>, weight: FaceWeight) -> Self {
        let balls: Vec<_> = sc
            .cell_coords()
            .filter(|c| Some(*c) != removed)
            .map(|c| (sc.center(c), sc.cell(c).rho))
            .collect();
        perforate(sc.dims(), sc.h(), &balls, weight, true)
    }

    pub fn fluid_volume(&self) -> f64 {
        self.fluid.iter().sum::<f64>() * self.h.powi(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn inc(rho: f64) -> InclusionParams {
        InclusionParams { theta: [0.5; 3], rho, a: Complex64::new(2.0, 1.0) }
    }

    #[test]
    fn resolution_is_enforced() {
        assert!(SupercellMedium::single(3, 8, inc(0.25)).is_err());
        assert!(SupercellMedium::single(3, 16, inc(0.25)).is_ok());
    }

    #[test]
    fn fluid_volume_matches_ball() {
        let sc = SupercellMedium::single(3, 16, inc(0.3)).unwrap();
        for w in [FaceWeight::Aperture, FaceWeight::VolumeHarmonic] {
            let p = Perforation::of_supercell(&sc, None, w);
            let solid = 27.0 - p.fluid_volume();
            let exact = crate::cell::lambda::ball_volume(0.3);
            assert!((solid - exact).abs() < 2e-3 * exact);
            // open area through the mid-plane equals the square minus the disk
            let mid = 23; // plane x = 1.5 through the center
            let mut open = 0.0;
            for j in 0..48 {
                for k in 0..48 {
                    open += p.faces[0][p.dims.idx(mid, j, k)] / 256.0;
                }
            }
            let disk = std::f64::consts::PI * 0.09;
            if w == FaceWeight::Aperture {
                assert!((9.0 - open - disk).abs() < 2e-3, "{open}");
            }
        }
    }

    #[test]
    fn removal_clears_the_cell() {
        let sc = SupercellMedium::single(3, 16, inc(0.3)).unwrap();
        let p = Perforation::of_supercell(&sc, Some(sc.origin_cell()), FaceWeight::Aperture);
        assert!(p.fluid.iter().all(|f| *f == 1.0));
        assert!(p.faces.iter().all(|fs| fs.iter().all(|f| *f == 1.0)));
    }
}
