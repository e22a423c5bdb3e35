//! Uniform 3D grids and fields stored in x-major order.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn cube(n: usize) -> Self {
        Dims([n; 3])
    }

    pub fn len(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.0[1] + j) * self.0[2] + k
    }

    #[inline]
    pub fn coords(&self, v: usize) -> [usize; 3] {
        let k = v % self.0[2];
        let j = (v / self.0[2]) % self.0[1];
        let i = v / (self.0[1] * self.0[2]);
        [i, j, k]
    }

    /// Linear stride of one step along axis `d`.
    #[inline]
    pub fn stride(&self, d: usize) -> usize {
        match d {
            0 => self.0[1] * self.0[2],
            1 => self.0[2],
            _ => 1,
        }
    }

    /// Neighbor index one step along `d` (sign +1 or -1), wrapping around.
    #[inline]
    pub fn wrap(&self, v: usize, d: usize, plus: bool) -> usize {
        let c = self.coords(v)[d];
        let n = self.0[d];
        let s = self.stride(d);
        if plus {
            if c + 1 == n {
                v + s - n * s
            } else {
                v + s
            }
        } else if c == 0 {
            v + n * s - s
        } else {
            v - s
        }
    }
}

/// A scalar field on a uniform grid. Voxel `(i,j,k)` has center
/// `origin + h (i + 1/2, j + 1/2, k + 1/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    pub dims: Dims,
    pub h: f64,
    pub origin: [f64; 3],
    pub data: Vec<T>,
}

pub type RealField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Copy + Default> Field<T> {
    pub fn zeros(dims: Dims, h: f64, origin: [f64; 3]) -> Self {
        Field { dims, h, origin, data: vec![T::default(); dims.len()] }
    }

    pub fn center(&self, v: usize) -> [f64; 3] {
        let c = self.dims.coords(v);
        [
            self.origin[0] + self.h * (c[0] as f64 + 0.5),
            self.origin[1] + self.h * (c[1] as f64 + 0.5),
            self.origin[2] + self.h * (c[2] as f64 + 0.5),
        ]
    }

    pub fn same_grid<U>(&self, other: &Field<U>) -> Result<()> {
        if self.dims != other.dims || self.h != other.h || self.origin != other.origin {
            return Err(Error::GridMismatch(format!(
                "{:?}/{}/{:?} vs {:?}/{}/{:?}",
                self.dims, self.h, self.origin, other.dims, other.h, other.origin
            )));
        }
        Ok(())
    }
}

impl RealField {
    /// Trilinear interpolation at `x`, periodic wrap.
    pub fn interpolate_periodic(&self, x: [f64; 3]) -> f64 {
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for d in 0..3 {
            let s = (x[d] - self.origin[d]) / self.h - 0.5;
            let f = s.floor();
            t[d] = s - f;
            let n = self.dims.0[d] as i64;
            base[d] = (f as i64).rem_euclid(n) as usize;
        }
        let mut acc = 0.0;
        for c in 0..8 {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for d in 0..3 {
                let up = (c >> d) & 1 == 1;
                idx[d] = if up { (base[d] + 1) % self.dims.0[d] } else { base[d] };
                w *= if up { t[d] } else { 1.0 - t[d] };
            }
            acc += w * self.data[self.dims.idx(idx[0], idx[1], idx[2])];
        }
        acc
    }
}
