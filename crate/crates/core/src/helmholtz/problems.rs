//! Heterogeneous and homogenized problems on a common PML grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cell::lambda::{lambda_closed_form, LambdaSpec};
use crate::error::{Error, Result};
use crate::geometry::ball_voxel_fraction;
use crate::grid::{ComplexField, RealField};
use crate::helmholtz::grid::{HelmholtzGrid, PmlSpec};
use crate::helmholtz::krylov::{solve, KrylovOptions, KrylovReport};
use crate::helmholtz::operator::{Boundary, Coefficients, FaceAverage, HelmholtzOperator, Permittivity};
use crate::medium::{cell_origin, DomainB, MediumConfig, MediumSample};

type C = Complex64;

/// Minimum points per wavelength.
pub const POINTS_PER_WAVELENGTH: f64 = 10.0;
/// Minimum voxels per cell side for heterogeneous solves.
pub const VOXELS_PER_CELL: f64 = 8.0;

/// Grid description in physical units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    /// Free space between the bounding box of `B` and the PML.
    pub pad: f64,
    pub pml_width: f64,
    /// Accept a PML thinner than one wavelength.
    #[serde(default)]
    pub allow_thin_pml: bool,
}

#[derive(Clone, Debug)]
pub struct HelmholtzSetup {
    pub grid: HelmholtzGrid,
    pub k0: f64,
    pub domain_b: DomainB,
    pub krylov: KrylovOptions,
    pub average: FaceAverage,
}

#[derive(Clone, Debug)]
pub struct HelmholtzSolution {
    pub field: ComplexField,
    pub report: KrylovReport,
}

pub fn wavelength(k0: f64) -> f64 {
    2.0 * PI / k0
}

impl HelmholtzSetup {
    pub fn new(domain_b: &DomainB, k0: f64, spec: GridSpec, krylov: KrylovOptions) -> Result<Self> {
        let lambda = wavelength(k0);
        if spec.h > lambda / POINTS_PER_WAVELENGTH {
            return Err(Error::Config(format!(
                "h = {} exceeds wavelength / {POINTS_PER_WAVELENGTH} = {}",
                spec.h,
                lambda / POINTS_PER_WAVELENGTH
            )));
        }
        if spec.pml_width < lambda && !spec.allow_thin_pml {
            return Err(Error::Config(format!(
                "PML width {} is below one wavelength {lambda}; set allow_thin_pml to accept",
                spec.pml_width
            )));
        }
        let grid = HelmholtzGrid::around(domain_b, spec.h, spec.pad, PmlSpec::new(spec.pml_width))?;
        Ok(HelmholtzSetup { grid, k0, domain_b: domain_b.clone(), krylov, average: FaceAverage::Harmonic })
    }

    /// Assemble and solve `div(A grad u) + k0^2 mu u = f`.
    pub fn solve_with(&self, coef: &Coefficients, f: &[C], guess: Option<&[C]>) -> Result<HelmholtzSolution> {
        let op = HelmholtzOperator::assemble(&self.grid, self.k0, coef, self.average, [Boundary::Dirichlet; 3])?;
        let b = op.rhs(f);
        let mut x = match guess {
            Some(g) => g.to_vec(),
            None => vec![C::new(0.0, 0.0); self.grid.len()],
        };
        let report = solve(&op, &b, &mut x, self.krylov)?;
        Ok(HelmholtzSolution { field: self.grid.field_from(x), report })
    }

    fn check_grid<T>(&self, f: &crate::grid::Field<T>) -> Result<()> {
        let g = &self.grid;
        if f.dims != g.dims || f.h != g.h || f.origin != g.origin {
            return Err(Error::GridMismatch("field is not on the Helmholtz grid".into()));
        }
        Ok(())
    }

    /// Error unless `f` vanishes on every voxel meeting the closure of `B`.
    pub fn check_support<T: Copy + Default + PartialEq>(&self, f: &crate::grid::Field<T>, what: &str) -> Result<()> {
        self.check_grid(f)?;
        for (v, x) in f.data.iter().enumerate() {
            if *x != T::default() && self.grid.touches_closure(&self.domain_b, v) {
                return Err(Error::Config(format!("{what} is not supported outside the closure of B (voxel {v})")));
            }
        }
        Ok(())
    }
}

/// `a_eta` voxel-averaged: volume fractions of free space, background and
/// inclusions are mixed arithmetically on cut voxels.
pub fn heterogeneous_coefficients(setup: &HelmholtzSetup, cfg: &MediumConfig, sample: &MediumSample) -> Result<Coefficients> {
    let g = &setup.grid;
    let h = g.h;
    if h > sample.eta / VOXELS_PER_CELL + 1e-12 {
        return Err(Error::Config(format!("h = {h} exceeds eta / {VOXELS_PER_CELL} = {}", sample.eta / VOXELS_PER_CELL)));
    }
    let fb = g.fraction_in(&cfg.domain_b);
    let a_b = C::new(cfg.a_b, 0.0);
    let mut a: Vec<C> = fb.iter().map(|f| (1.0 - f) + f * a_b).collect();
    let eta2 = sample.eta * sample.eta;
    for (j, p) in sample.params() {
        if p.rho == 0.0 {
            continue;
        }
        let o = cell_origin(sample.eta, sample.z, *j);
        let c: [f64; 3] = std::array::from_fn(|d| o[d] + sample.eta * p.theta[d]);
        let r = sample.eta * p.rho;
        let lo: [usize; 3] = std::array::from_fn(|d| (((c[d] - r - g.origin[d]) / h).floor().max(0.0)) as usize);
        let hi: [usize; 3] =
            std::array::from_fn(|d| ((((c[d] + r - g.origin[d]) / h).ceil()) as usize).min(g.dims.0[d]));
        for i in lo[0]..hi[0] {
            for jj in lo[1]..hi[1] {
                for k in lo[2]..hi[2] {
                    let v = g.dims.idx(i, jj, k);
                    let corner = [g.origin[0] + i as f64 * h, g.origin[1] + jj as f64 * h, g.origin[2] + k as f64 * h];
                    let f = ball_voxel_fraction(c, r, corner, h);
                    if f > 0.0 {
                        a[v] += f * (eta2 * p.a - a_b);
                    }
                }
            }
        }
    }
    Ok(Coefficients { a: Permittivity::Isotropic(a), mu: vec![C::new(1.0, 0.0); g.len()] })
}

/// Piecewise-constant effective medium: `(A_eff, mu_eff)` in `B`, `(I, 1)` outside.
pub fn homogenized_coefficients(setup: &HelmholtzSetup, a_eff: [[f64; 3]; 3], mu_eff: C) -> Coefficients {
    let g = &setup.grid;
    let fb = g.fraction_in(&setup.domain_b);
    let mu = fb.iter().map(|f| (1.0 - f) + f * mu_eff).collect();
    let iso = (0..3).all(|r| (0..3).all(|c| if r == c { a_eff[r][r] == a_eff[0][0] } else { a_eff[r][c] == 0.0 }));
    let a = if iso {
        Permittivity::Isotropic(fb.iter().map(|f| C::new((1.0 - f) + f * a_eff[0][0], 0.0)).collect())
    } else {
        Permittivity::Anisotropic {
            diag: fb.iter().map(|f| std::array::from_fn(|d| C::new((1.0 - f) + f * a_eff[d][d], 0.0))).collect(),
            cross: fb.iter().map(|f| [f * a_eff[0][1], f * a_eff[0][2], f * a_eff[1][2]]).collect(),
        }
    };
    Coefficients { a, mu }
}

/// `u_eta` for one medium realization.
pub fn solve_heterogeneous(setup: &HelmholtzSetup, cfg: &MediumConfig, sample: &MediumSample, f: &ComplexField) -> Result<HelmholtzSolution> {
    setup.check_support(f, "source f")?;
    let coef = heterogeneous_coefficients(setup, cfg, sample)?;
    setup.solve_with(&coef, &f.data, None)
}

pub fn solve_homogenized(setup: &HelmholtzSetup, a_eff: [[f64; 3]; 3], mu_eff: C, f: &ComplexField) -> Result<HelmholtzSolution> {
    setup.check_support(f, "source f")?;
    let coef = homogenized_coefficients(setup, a_eff, mu_eff);
    setup.solve_with(&coef, &f.data, None)
}

/// `G_{h,g}(x') = int G_h(x, x') g(x) dx`, one solve with right-hand side `g`
/// since the discrete operator is symmetric.
pub fn weighted_green(setup: &HelmholtzSetup, a_eff: [[f64; 3]; 3], mu_eff: C, g: &RealField) -> Result<HelmholtzSolution> {
    setup.check_support(g, "test function g")?;
    let coef = homogenized_coefficients(setup, a_eff, mu_eff);
    let rhs: Vec<C> = g.data.iter().map(|x| C::new(*x, 0.0)).collect();
    setup.solve_with(&coef, &rhs, None)
}

/// A truncated Gaussian bump: `amplitude exp(-|x - c|^2 / (2 w^2))` for
/// `|x - c| <= cutoff w`, zero beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub center: [f64; 3],
    pub width: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_cutoff() -> f64 {
    3.0
}

fn default_amplitude() -> f64 {
    1.0
}

impl GaussianBump {
    pub fn support_radius(&self) -> f64 {
        self.cutoff * self.width
    }

    /// Distance between the support and the closure of `B`.
    pub fn clearance(&self, b: &DomainB) -> f64 {
        -b.depth(self.center) - self.support_radius()
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        let r2: f64 = (0..3).map(|d| (x[d] - self.center[d]).powi(2)).sum();
        if r2 > self.support_radius().powi(2) {
            0.0
        } else {
            self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
        }
    }

    pub fn sample(&self, grid: &HelmholtzGrid) -> RealField {
        let mut f = grid.real_zeros();
        for (v, x) in f.data.iter_mut().enumerate() {
            *x = self.value(grid.center(v));
        }
        f
    }
}

pub fn to_complex(f: &RealField) -> ComplexField {
    ComplexField { dims: f.dims, h: f.h, origin: f.origin, data: f.data.iter().map(|x| C::new(*x, 0.0)).collect() }
}

/// `Lambda(x / eta)` at every voxel center: the inclusion field inside
/// inclusions, 1 elsewhere.
pub fn lambda_field(setup: &HelmholtzSetup, sample: &MediumSample, n_modes: usize) -> Result<Vec<C>> {
    let g = &setup.grid;
    (0..g.len())
        .map(|v| {
            let x = g.center(v);
            let (j, y) = sample.locate(x);
            match sample.cells.get(&j) {
                Some(e) => {
                    let p = e.params;
                    let r = (0..3).map(|d| (y[d] - p.theta[d]).powi(2)).sum::<f64>().sqrt();
                    if r < p.rho {
                        lambda_closed_form(&LambdaSpec { k0: setup.k0, a: p.a, rho: p.rho, n_modes }, r)
                    } else {
                        Ok(C::new(1.0, 0.0))
                    }
                }
                None => Ok(C::new(1.0, 0.0)),
            }
        })
        .collect()
}

/// `|u_eta - Lambda(x/eta) u_h|_{L2(B_delta)} / |u_h|_{L2(B_delta)}`, with
/// `B_delta` the voxels whose centers lie deeper than `delta` in `B`.
pub fn two_scale_error(setup: &HelmholtzSetup, sample: &MediumSample, u_eta: &ComplexField, u_h: &ComplexField, delta: f64) -> Result<f64> {
    setup.check_grid(u_eta)?;
    setup.check_grid(u_h)?;
    let lam = lambda_field(setup, sample, 1)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for v in 0..setup.grid.len() {
        if setup.domain_b.depth(setup.grid.center(v)) > delta {
            num += (u_eta.data[v] - lam[v] * u_h.data[v]).norm_sqr();
            den += u_h.data[v].norm_sqr();
        }
    }
    if den == 0.0 {
        return Err(Error::Statistics("empty or zero B_delta region".into()));
    }
    Ok((num / den).sqrt())
}

/// `(g, u) = int g u dx` for real `g`.
pub fn pairing(g: &RealField, u: &ComplexField) -> Result<C> {
    g.same_grid(u)?;
    let h3 = g.h.powi(3);
    Ok(g.data.iter().zip(&u.data).map(|(a, b)| *a * b).sum::<C>() * h3)
}
