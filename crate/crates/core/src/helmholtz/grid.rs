//! Box grids with a perfectly matched layer on every face.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ball_voxel_fraction;
use crate::grid::{ComplexField, Dims, Field};
use crate::medium::DomainB;

/// Polynomial absorption profile `sigma(d) = sigma_max (d / w)^power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmlSpec {
    /// Layer thickness (length units).
    pub width: f64,
    /// Normal-incidence round-trip reflection the profile is tuned for.
    #[serde(default = "default_reflection")]
    pub reflection: f64,
    #[serde(default = "default_power")]
    pub power: u32,
}

fn default_reflection() -> f64 {
    1e-8
}

fn default_power() -> u32 {
    2
}

impl PmlSpec {
    pub fn new(width: f64) -> Self {
        PmlSpec { width, reflection: default_reflection(), power: default_power() }
    }

    pub fn sigma_max(&self) -> f64 {
        (self.power as f64 + 1.0) * (1.0 / self.reflection).ln() / (2.0 * self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzGrid {
    pub dims: Dims,
    pub h: f64,
    /// Lower corner of the whole grid, PML included.
    pub origin: [f64; 3],
    pub pml: PmlSpec,
    /// PML thickness in voxels on every face.
    pub pml_voxels: usize,
}

impl HelmholtzGrid {
    /// Grid holding `[lo, hi]` plus `pad` on every side, then the PML.
    pub fn around_box(lo: [f64; 3], hi: [f64; 3], h: f64, pad: f64, pml: PmlSpec) -> Result<Self> {
        if !(h > 0.0) || pad < 0.0 || !(pml.width > 0.0) {
            return Err(Error::Config(format!("bad grid: h = {h}, pad = {pad}, pml = {}", pml.width)));
        }
        let pml_voxels = (pml.width / h - 1e-9).ceil() as usize;
        let mut dims = [0usize; 3];
        let mut origin = [0.0; 3];
        for d in 0..3 {
            let span = hi[d] - lo[d] + 2.0 * pad;
            let n = (span / h - 1e-9).ceil().max(1.0) as usize;
            let mid = 0.5 * (lo[d] + hi[d]);
            dims[d] = n + 2 * pml_voxels;
            origin[d] = mid - 0.5 * dims[d] as f64 * h;
        }
        let pml = PmlSpec { width: pml_voxels as f64 * h, ..pml };
        Ok(HelmholtzGrid { dims: Dims(dims), h, origin, pml, pml_voxels })
    }

    pub fn around(b: &DomainB, h: f64, pad: f64, pml: PmlSpec) -> Result<Self> {
        let (lo, hi) = b.bounding_box();
        Self::around_box(lo, hi, h, pad, pml)
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn center(&self, v: usize) -> [f64; 3] {
        let c = self.dims.coords(v);
        std::array::from_fn(|d| self.origin[d] + self.h * (c[d] as f64 + 0.5))
    }

    /// The region outside the PML.
    pub fn interior(&self) -> ([f64; 3], [f64; 3]) {
        let w = self.pml_voxels as f64 * self.h;
        let lo = std::array::from_fn(|d| self.origin[d] + w);
        let hi = std::array::from_fn(|d| self.origin[d] + self.dims.0[d] as f64 * self.h - w);
        (lo, hi)
    }

    pub fn in_pml(&self, v: usize) -> bool {
        let c = self.dims.coords(v);
        (0..3).any(|d| c[d] < self.pml_voxels || c[d] + self.pml_voxels >= self.dims.0[d])
    }

    /// Coordinate stretch `s = 1 + i sigma / k0` along axis `d` at `x`.
    pub fn stretch(&self, d: usize, x: f64, k0: f64) -> Complex64 {
        if self.pml_voxels == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let (lo, hi) = self.interior();
        let depth = (lo[d] - x).max(x - hi[d]).max(0.0);
        let sigma = self.pml.sigma_max() * (depth / self.pml.width).powi(self.pml.power as i32);
        Complex64::new(1.0, sigma / k0)
    }

    pub fn zeros(&self) -> ComplexField {
        Field::zeros(self.dims, self.h, self.origin)
    }

    pub fn real_zeros(&self) -> Field<f64> {
        Field::zeros(self.dims, self.h, self.origin)
    }

    pub fn field_from(&self, data: Vec<Complex64>) -> ComplexField {
        Field { dims: self.dims, h: self.h, origin: self.origin, data }
    }

    /// Fraction of every voxel lying in `B`.
    pub fn fraction_in(&self, b: &DomainB) -> Vec<f64> {
        let h = self.h;
        (0..self.len())
            .map(|v| {
                let c = self.center(v);
                let lo_v: [f64; 3] = std::array::from_fn(|d| c[d] - 0.5 * h);
                match b {
                    DomainB::Box { lo, hi } => (0..3)
                        .map(|d| ((lo_v[d] + h).min(hi[d]) - lo_v[d].max(lo[d])).max(0.0) / h)
                        .product(),
                    DomainB::Ball { center, radius } => ball_voxel_fraction(*center, *radius, lo_v, h),
                }
            })
            .collect()
    }

    /// Whether the voxel meets the closure of `B`.
    pub fn touches_closure(&self, b: &DomainB, v: usize) -> bool {
        let c = self.center(v);
        let h = self.h;
        match b {
            DomainB::Box { lo, hi } => (0..3).all(|d| c[d] + 0.5 * h >= lo[d] && c[d] - 0.5 * h <= hi[d]),
            DomainB::Ball { center, radius } => {
                let mut d2 = 0.0;
                for d in 0..3 {
                    let e = (center[d] - c[d]).abs() - 0.5 * h;
                    if e > 0.0 {
                        d2 += e * e;
                    }
                }
                d2.sqrt() <= *radius
            }
        }
    }
}
