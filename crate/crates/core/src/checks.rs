//! Named numerical self-checks with pinned tolerances. The `verify`
//! subcommand and the acceptance target both run these.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::corrector::{solve_corrector, solve_modified_corrector, CorrectorOptions};
use crate::cell::green::{perforated_green, radial_profile, GreenDomain, OuterBc};
use crate::cell::lambda::{lambda_closed_form, lambda_series, mu_eff, LambdaSpec, MarginalQuadrature};
use crate::cell::laplace::CgOptions;
use crate::cell::representation::{direct_difference, modified_corrector_via_representation};
use crate::cell::supercell::{FaceWeight, SupercellMedium};
use crate::cell::n_value;
use crate::chatterjee::{cov_exact_enumeration, Comp, DiscreteLaw, DEFAULT_STATE_BOUND};
use crate::error::{Error, Result};
use crate::experiment::{self, Effective};
use crate::helmholtz::{
    fluctuation_functional, homogenized_coefficients, pairing, solve_homogenized, to_complex, weighted_green, GaussianBump,
    GridSpec, HelmholtzSetup, KrylovOptions,
};
use crate::laws::{ALaw, Node, Nu0, RhoLaw, ThetaLaw, DEFAULT_MAX_ATTEMPTS};
use crate::limit::{limit_second_moments, noise_mask, pairing_by_reciprocity, sample_v, sample_with_law, NoiseLaw};
use crate::medium::{sample_window, CellLaw, CellWindow, DomainB, InclusionParams, MediumConfig, ZSpec};
use crate::mnstats::{covariance_set, m_tensor, m_tensor_shifted, n_statistics, CovarianceConfig, CovarianceSet, NQuadrature};
use crate::rng::RngKey;
use crate::stats::loglog_slope;

/// Corrector tolerance for the gauge and conservation checks. A constant
/// shift `c` moves `M` by `c` times the net discrete flux out of the cell,
/// which vanishes only to the solver tolerance.
pub const GAUGE_CG_TOL: f64 = 1e-12;

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Accepted interval for `measured`.
    pub lo: f64,
    pub hi: f64,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Check { name: name.into(), measured, lo, hi, passed: measured >= lo && measured <= hi, detail: String::new(), seconds: 0.0 }
    }

    pub fn at_most(name: impl Into<String>, measured: f64, tol: f64) -> Self {
        Self::within(name, measured, f64::NEG_INFINITY, tol)
    }

    pub fn failed(name: impl Into<String>, err: &Error) -> Self {
        Check { name: name.into(), measured: f64::NAN, lo: f64::NAN, hi: f64::NAN, passed: false, detail: err.to_string(), seconds: 0.0 }
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let bound = if self.lo == f64::NEG_INFINITY {
            format!("<= {:.3e}", self.hi)
        } else if self.lo.is_nan() {
            "error".to_string()
        } else {
            format!("in [{:.4}, {:.4}]", self.lo, self.hi)
        };
        write!(f, "[{status}] {}: {:.4e} {bound} ({:.1} s)", self.name, self.measured, self.seconds)?;
        if !self.detail.is_empty() {
            write!(f, " -- {}", self.detail)?;
        }
        Ok(())
    }
}

/// Run `body`, time it, and turn an error into one failed check.
pub fn timed(name: &str, body: impl FnOnce() -> Result<Vec<Check>>) -> Vec<Check> {
    let t = Instant::now();
    let mut out = match body() {
        Ok(v) => v,
        Err(e) => vec![Check::failed(name, &e)],
    };
    let s = t.elapsed().as_secs_f64();
    for c in &mut out {
        c.seconds = s;
    }
    out
}

type Cp = Comp<(f64, f64), C>;

fn two_point_component(k: usize) -> DiscreteLaw<(f64, f64), C> {
    let p = 0.3 + 0.15 * k as f64;
    DiscreteLaw {
        theta: vec![((0.35 + 0.1 * k as f64, 0.12), p), ((0.6, 0.21 + 0.02 * k as f64), 1.0 - p)],
        a: vec![(C::new(2.0, 1.0), 0.4), (C::new(0.5, 1.5 + 0.5 * k as f64), 0.6)],
    }
}

/// Covariance identity by full enumeration for 1, 2 and 3 components.
pub fn chatterjee_identity() -> Result<Vec<Check>> {
    let f = |x: &[Cp]| -> C { x.iter().map(|c| c.theta.1 * c.a).sum::<C>() + x.iter().map(|c| c.theta.0 + c.a).product::<C>() };
    let h = |x: &[Cp]| -> C {
        let s: f64 = x.iter().map(|c| c.theta.0 * c.theta.1).sum();
        C::new(0.0, 3.0 * s).exp() * x[0].a + x.iter().map(|c| c.theta.1).sum::<f64>().powi(2)
    };
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for n in 1..=3 {
        let laws: Vec<_> = (0..n).map(two_point_component).collect();
        for (name, r) in [("f,h", cov_exact_enumeration(&f, &h, &laws, DEFAULT_STATE_BOUND)), ("f,f", cov_exact_enumeration(&f, &f, &laws, DEFAULT_STATE_BOUND))] {
            let r = r?;
            let e = (r.lhs - r.rhs).norm() / (1.0 + r.lhs.norm());
            if e >= worst {
                worst = e;
                detail = format!("worst at n = {n} ({name}): lhs {:.6e}", r.lhs);
            }
        }
    }
    Ok(vec![Check::at_most("covariance identity, n in {1,2,3}", worst, 1e-12).with_detail(detail)])
}

/// Eigenseries against the closed form at 200 modes.
pub fn lambda_consistency() -> Result<Vec<Check>> {
    let spec = LambdaSpec { k0: 1.0, a: C::new(2.0, 1.0), rho: 0.3, n_modes: 200 };
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let r = spec.rho * i as f64 / 100.0;
        let c = lambda_closed_form(&spec, r)?;
        worst = worst.max((lambda_series(&spec, r) - c).norm() / c.norm());
    }
    Ok(vec![Check::at_most("Lambda series vs closed form, 100 radii", worst, 1e-6)])
}

/// Series and volume routes for `mu_eff` on a deterministic law.
pub fn mu_eff_dual_route() -> Result<Vec<Check>> {
    let q = MarginalQuadrature { rho: vec![Node { x: 0.3, w: 1.0 }], a: vec![Node { x: C::new(2.0, 1.0), w: 1.0 }] };
    let m = mu_eff(&q, 3.0, 4000)?;
    let rel = (m.series - m.volume_route).norm() / m.volume_route.norm();
    Ok(vec![Check::at_most("mu_eff series vs 1 - 2 E|B| + E N", rel, 1e-8)
        .with_detail(format!("series {:.10}, volume {:.10}", m.series, m.volume_route))])
}

/// A single sphere in an `L^3` supercell: `M` against `2 pi rho^3 I`.
pub fn dilute_m(l: usize, per_cell: usize, rho: f64) -> Result<Vec<Check>> {
    let inc = InclusionParams { theta: [0.5; 3], rho, a: C::new(2.0, 1.0) };
    let sc = SupercellMedium::single(l, per_cell, inc)?;
    let opts = CorrectorOptions::default();
    let mut sol = solve_corrector(&sc, opts)?;
    solve_modified_corrector(&sc, &mut sol, sc.origin_cell(), opts)?;
    let m = m_tensor(&sc, &sol)?.m;
    let e = 2.0 * PI * rho.powi(3);
    let mut diag: f64 = 0.0;
    let mut off: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                diag = diag.max((m.0[i][j] - e).abs() / e);
            } else {
                off = off.max(m.0[i][j].abs() / e);
            }
        }
    }
    let norm = (0..3).map(|i| (0..3).map(|j| (m.0[i][j] - if i == j { e } else { 0.0 }).powi(2)).sum::<f64>()).sum::<f64>().sqrt();
    let grid = l * per_cell;
    Ok(vec![
        Check::at_most(format!("dilute M, |M - 2 pi rho^3 I| / 2 pi rho^3 (L = {l}, {grid}^3)"), norm / e, 0.05)
            .with_detail(format!("M_00 / 2 pi rho^3 = {:.5}, worst diagonal {diag:.3e}", m.0[0][0] / e)),
        Check::at_most("dilute M, off-diagonal / 2 pi rho^3", off, 0.02),
    ])
}

fn random_law() -> CellLaw {
    CellLaw {
        nu0: Nu0 { theta: ThetaLaw::Box { lo: [0.4; 3], hi: [0.6; 3] }, rho: RhoLaw::Uniform { lo: 0.25, hi: 0.32 } },
        nu1: ALaw::Rect { re: [1.0, 3.0], im: [0.5, 1.5] },
        xi: 0.05,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
    }
}

/// Gauge invariance of `M` and corrector conservation on random supercells.
pub fn corrector_checks(l: usize, per_cell: usize, samples: usize, tol: f64) -> Result<Vec<Check>> {
    let law = random_law();
    let opts = CorrectorOptions { cg: CgOptions { tol, max_iter: 20_000 }, weight: FaceWeight::Aperture };
    let mut gauge: f64 = 0.0;
    let mut div: f64 = 0.0;
    for s in 0..samples {
        let w = CellWindow::cube(l as i64);
        let sc = SupercellMedium::from_sample(&sample_window(&law, &RngKey::root(31).child(s as u64), w)?, w, per_cell)?;
        let mut sol = solve_corrector(&sc, opts)?;
        solve_modified_corrector(&sc, &mut sol, sc.origin_cell(), opts)?;
        let base = m_tensor(&sc, &sol)?.m;
        for (a, b) in [(1.7, 0.0), (0.0, -2.3), (5.0, 11.0)] {
            gauge = gauge.max(m_tensor_shifted(&sc, &sol, a, b)?.max_abs_diff(&base));
        }
        let minus = &sol.minus.as_ref().expect("modified corrector").1;
        for i in 0..3 {
            div = div.max(sol.full.divergence(i)).max(minus.divergence(i));
        }
    }
    Ok(vec![
        Check::at_most("gauge: max |M(phi + c) - M(phi)|", gauge, 1e-10),
        Check::at_most(format!("conservation: max-norm divergence over {samples} supercells (phi and phi^-)"), div, 10.0 * tol)
            .with_detail(format!("solver tolerance {tol:e}")),
    ])
}

fn green_medium(l: usize, per_cell: usize) -> Result<SupercellMedium> {
    let law = CellLaw {
        nu0: Nu0 { theta: ThetaLaw::Uniform, rho: RhoLaw::Uniform { lo: 0.34, hi: 0.4 } },
        nu1: ALaw::Point { a: C::new(2.0, 1.0) },
        xi: 0.05,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
    };
    let w = CellWindow::cube(l as i64);
    SupercellMedium::from_sample(&sample_window(&law, &RngKey::root(7), w)?, w, per_cell)
}

/// Decay of the perforated Green's function over one decade of radii.
pub fn green_decay(per_cell: usize, pad: usize) -> Result<Vec<Check>> {
    let sc = green_medium(7, per_cell)?;
    let c = sc.origin_cell();
    let src = [c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5];
    let dom = GreenDomain::Box { pad, bc: OuterBc::Robin };
    let g = perforated_green(&sc, dom, src, &[c], FaceWeight::Aperture, CgOptions { tol: 1e-8, max_iter: 20_000 })?;
    let p = radial_profile(&g, 0.35, 3.5, 12);
    let r: Vec<f64> = p.iter().map(|e| e.0).collect();
    let sg = loglog_slope(&r, &p.iter().map(|e| e.1).collect::<Vec<_>>());
    let sd = loglog_slope(&r, &p.iter().map(|e| e.2).collect::<Vec<_>>());
    let vf = format!("7^3 cells, volume fraction {:.3}, radii {:.2}..{:.2}", sc.volume_fraction(), r[0], r[r.len() - 1]);
    Ok(vec![Check::within("Green decay slope of G", sg, -1.15, -0.85).with_detail(vf), Check::within("Green decay slope of |grad G|", sd, -2.3, -1.7)])
}

/// Representation formula against the direct two-solve difference, and the
/// far-field decay of the difference.
pub fn representation(per_cell: usize, pad: usize) -> Result<Vec<Check>> {
    let sc = green_medium(7, per_cell)?;
    let cg = CgOptions { tol: 1e-10, max_iter: 20_000 };
    let opts = CorrectorOptions { cg, ..Default::default() };
    let j = sc.origin_cell();
    let mut sol = solve_corrector(&sc, opts)?;
    solve_modified_corrector(&sc, &mut sol, j, opts)?;
    let minus = &sol.minus.as_ref().expect("modified corrector").1;
    let c = [j[0] as f64 + 0.5, j[1] as f64 + 0.5, j[2] as f64 + 0.5];
    // antipodal probe pairs 2 cells or more from cell j; pair differences
    // remove the constant of the periodic Green's function
    let mut probes = vec![];
    for i in 0..3 {
        for o2 in [0.5, 1.5] {
            let mut o = [0.5; 3];
            o[i] = 2.5;
            o[(i + 1) % 3] = o2;
            probes.push([c[0] + o[0], c[1] + o[1], c[2] + o[2]]);
            probes.push([c[0] - o[0], c[1] - o[1], c[2] - o[2]]);
        }
    }
    let rep = modified_corrector_via_representation(&sc, &sol.full, j, &probes, GreenDomain::Periodic, FaceWeight::Aperture, cg)?;
    let mut worst: f64 = 0.0;
    for k in 0..probes.len() / 2 {
        let i = k / 2;
        let dp = direct_difference(&sol.full, minus, sc.h(), probes[2 * k])?;
        let dm = direct_difference(&sol.full, minus, sc.h(), probes[2 * k + 1])?;
        let direct = dp[i] - dm[i];
        let repr = rep[2 * k][i] - rep[2 * k + 1][i];
        worst = worst.max((repr - direct).abs() / direct.abs());
    }
    let mut far = vec![];
    for s in [1.5, 2.0, 2.5, 3.0, 3.5] {
        far.push([c[0] + s, c[1] + 0.5, c[2] + 0.5]);
        far.push([c[0] - s, c[1] - 0.5, c[2] - 0.5]);
    }
    let dom = GreenDomain::Box { pad, bc: OuterBc::Robin };
    let rb = modified_corrector_via_representation(&sc, &sol.full, j, &far, dom, FaceWeight::Aperture, cg)?;
    let mut d = vec![];
    let mut m = vec![];
    for k in 0..far.len() / 2 {
        d.push(((far[2 * k][0] - c[0]).powi(2) + 0.5).sqrt());
        let n = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        m.push(0.5 * (n(&rb[2 * k]) + n(&rb[2 * k + 1])));
    }
    let slope = loglog_slope(&d, &m);
    Ok(vec![
        Check::at_most("representation vs direct difference, probes >= 2 cells away", worst, 0.05),
        Check::within("representation far-field exponent", slope, -2.3, -1.7),
    ])
}

/// Homogenized problem used by the limit checks: `B` the unit box centered at
/// the origin, source and test function on opposite sides outside `B`.
#[derive(Clone, Debug)]
pub struct LimitScenario {
    pub domain_b: DomainB,
    pub k0: f64,
    pub a_b: f64,
    pub a_eff: [[f64; 3]; 3],
    pub mu_eff: C,
    pub f: GaussianBump,
    pub g: GaussianBump,
    pub delta: f64,
}

impl Default for LimitScenario {
    fn default() -> Self {
        LimitScenario {
            domain_b: DomainB::Box { lo: [-0.5; 3], hi: [0.5; 3] },
            k0: 3.0,
            a_b: 0.8,
            a_eff: [[0.72, 0.01, 0.0], [0.01, 0.70, -0.005], [0.0, -0.005, 0.71]],
            mu_eff: C::new(1.08, 0.03),
            f: GaussianBump { center: [-0.95, 0.1, 0.0], width: 0.1, cutoff: 3.0, amplitude: 1.0 },
            g: GaussianBump { center: [0.95, -0.1, 0.05], width: 0.1, cutoff: 3.0, amplitude: 1.0 },
            delta: 0.1,
        }
    }
}

impl LimitScenario {
    /// `h = 1/20` gives 64^3 voxels.
    pub fn grid(&self, h: f64) -> GridSpec {
        GridSpec { h, pad: 0.75, pml_width: 0.35, allow_thin_pml: true }
    }
}

/// A covariance set read off a random PSD matrix for
/// `(W, Re N^theta, Im N^theta)` and a random PSD block for `N^a`.
pub fn synthetic_covariances(seed: u64, scale: f64) -> CovarianceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<Vec<f64>> = (0..11).map(|_| (0..11).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let s = |i: usize, j: usize| scale * (0..11).map(|k| b[i][k] * b[j][k]).sum::<f64>();
    let ba: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut c = CovarianceSet::zero();
    for p in 0..9 {
        for q in 0..9 {
            c.c_w[p / 3][p % 3][q / 3][q % 3] = s(p, q);
        }
        c.c_wn[p / 3][p % 3] = -C::new(s(p, 9), s(p, 10));
    }
    c.c_theta_star = s(9, 9) + s(10, 10);
    c.c_theta = C::new(s(9, 9) - s(10, 10), 2.0 * s(9, 10));
    let (a00, a11, a01) = (ba[0] * ba[0] + ba[1] * ba[1], ba[2] * ba[2] + ba[3] * ba[3], ba[0] * ba[2] + ba[1] * ba[3]);
    c.c_a_star = scale * (a00 + a11);
    c.c_a = scale * C::new(a00 - a11, 2.0 * a01);
    c
}

/// Quadrature of the limit against sampled `(g, v)` by reciprocity, plus
/// explicit `v` solves for the first `explicit` draws.
pub fn route_equivalence(h: f64, draws: usize, explicit: usize, cov: &CovarianceSet, sc: &LimitScenario) -> Result<Vec<Check>> {
    let setup = HelmholtzSetup::new(&sc.domain_b, sc.k0, sc.grid(h), KrylovOptions { tol: 1e-10, ..Default::default() })?;
    let grid = &setup.grid;
    let f = to_complex(&sc.f.sample(grid));
    let g = sc.g.sample(grid);
    let u_h = solve_homogenized(&setup, sc.a_eff, sc.mu_eff, &f)?.field;
    let green = weighted_green(&setup, sc.a_eff, sc.mu_eff, &g)?.field;
    let lim = limit_second_moments(cov, &u_h, &green, grid, &sc.domain_b, sc.delta, sc.a_b, sc.k0)?;
    let law = NoiseLaw::new(cov)?;
    let mask = noise_mask(grid, &sc.domain_b, sc.delta);
    let key = RngKey::root(1000);
    let coef = homogenized_coefficients(&setup, sc.a_eff, sc.mu_eff);
    let mut z = Vec::with_capacity(draws);
    let mut explicit_err: f64 = 0.0;
    for s in 0..draws {
        let n = sample_with_law(&law, grid, &mask, &key.child(s as u64))?;
        let zr = pairing_by_reciprocity(&green, &n, &u_h, sc.a_b, sc.k0)?;
        if s < explicit {
            let v = sample_v(&setup, &coef, &n, &u_h, sc.a_b)?.field;
            let zd = pairing(&g, &v)?;
            explicit_err = explicit_err.max((zd - zr).norm() / zd.norm());
        }
        z.push(zr);
    }
    let mc = fluctuation_functional(&z, 1.0)?;
    let dims = grid.dims.0;
    let mut out = vec![
        Check::at_most(
            format!("route equivalence E|U|^2, {draws} draws on {}x{}x{}, in stderr", dims[0], dims[1], dims[2]),
            (mc.e_abs2 - lim.e_abs2).abs() / mc.e_abs2_stderr,
            4.0,
        )
        .with_detail(format!("sampled {:.5e} +- {:.2e}, quadrature {:.5e}", mc.e_abs2, mc.e_abs2_stderr, lim.e_abs2)),
        Check::at_most("route equivalence E U^2, in stderr", (mc.e_sq - lim.e_sq).norm() / mc.e_sq_stderr, 4.0)
            .with_detail(format!("sampled {:.4e}, quadrature {:.4e}", mc.e_sq, lim.e_sq)),
    ];
    if explicit > 0 {
        out.push(Check::at_most(format!("explicit v solves vs reciprocity pairing ({explicit} draws)"), explicit_err, 1e-6));
    }
    Ok(out)
}

/// Nested Monte Carlo settings for the covariance sanity check.
pub fn sanity_covariance_config() -> CovarianceConfig {
    CovarianceConfig {
        nu0: Nu0 { theta: ThetaLaw::Box { lo: [0.42; 3], hi: [0.58; 3] }, rho: RhoLaw::Uniform { lo: 0.25, hi: 0.3 } },
        nu1: ALaw::Rect { re: [0.5, 3.0], im: [0.5, 2.0] },
        xi: 0.05,
        k0: 3.0,
        l: 3,
        per_cell: 16,
        outer: 6,
        inner: 1,
        corrector: CorrectorOptions { cg: CgOptions { tol: 1e-10, max_iter: 5000 }, ..Default::default() },
        quadrature: NQuadrature::default(),
        n_mc_samples: 0,
        l_sensitivity: false,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
    }
}

/// PSD and pseudo-covariance bounds on an estimated set, and the two-point
/// closed form for `C^theta,*`.
pub fn covariance_sanity() -> Result<Vec<Check>> {
    let r = covariance_set(&sanity_covariance_config(), &RngKey::root(11))?;
    let s = &r.set;
    let tr = s.c_w_trace();
    let (r1, r2, p) = (0.15, 0.3, 0.3);
    let a0 = C::new(2.0, 1.0);
    let nu0 = Nu0 { theta: ThetaLaw::Point { theta: [0.5; 3] }, rho: RhoLaw::TwoPoint { values: [r1, r2], p } };
    let q = n_statistics(&nu0, &ALaw::Point { a: a0 }, 0.05, 3.0, NQuadrature::default())?;
    let d = n_value(r1, a0, 3.0)? - n_value(r2, a0, 3.0)?;
    let star = p * (1.0 - p) * d.norm_sqr();
    Ok(vec![
        Check::within("C_W min eigenvalue / trace", s.c_w_min_eigenvalue() / tr, -1e-8, f64::INFINITY)
            .with_detail(format!("trace {tr:.4e}, raw min eigenvalue before projection {:.3e}", r.c_w_raw_min_eigenvalue)),
        Check::at_most("|C_theta| - C_theta*", s.c_theta.norm() - s.c_theta_star, 0.0),
        Check::at_most("|C_a| - C_a*", s.c_a.norm() - s.c_a_star, 0.0),
        Check::at_most("two-point law C_theta* vs closed form, relative", (q.c_theta_star - star).abs() / star, 1e-10),
    ])
}

/// Medium law and solver settings for the heterogeneous runs.
#[derive(Clone, Debug)]
pub struct HeterogeneousSpec {
    pub medium: MediumConfig,
    pub grid: GridSpec,
    pub krylov: KrylovOptions,
    pub f: GaussianBump,
    pub g: GaussianBump,
    pub etas: Vec<f64>,
    pub samples: usize,
    /// Corrector ensemble for `A_eff`.
    pub l: usize,
    pub per_cell: usize,
    pub corrector_samples: usize,
    pub delta: f64,
}

impl HeterogeneousSpec {
    pub fn two_scale() -> Self {
        let sc = LimitScenario::default();
        HeterogeneousSpec {
            medium: MediumConfig {
                eta: 1.0 / 6.0,
                k0: sc.k0,
                a_b: sc.a_b,
                domain_b: sc.domain_b.clone(),
                xi: 0.05,
                nu0: Nu0 { theta: ThetaLaw::Uniform, rho: RhoLaw::Uniform { lo: 0.25, hi: 0.3 } },
                nu1: ALaw::Rect { re: [1.0, 3.0], im: [0.5, 1.5] },
                delta_margin: 1.0 / 6.0,
                seed: 2024,
                z: ZSpec::default(),
                max_attempts: DEFAULT_MAX_ATTEMPTS,
            },
            grid: GridSpec { h: 0.05, pad: 0.75, pml_width: 0.35, allow_thin_pml: true },
            krylov: KrylovOptions { tol: 1e-8, max_iter: 100_000, ..Default::default() },
            f: sc.f,
            g: sc.g,
            etas: vec![1.0 / 6.0, 1.0 / 8.0, 1.0 / 12.0],
            samples: 16,
            l: 3,
            per_cell: 16,
            corrector_samples: 4,
            delta: 1.0 / 6.0,
        }
    }

    pub fn end_to_end() -> Self {
        HeterogeneousSpec { etas: vec![1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0], samples: 200, ..Self::two_scale() }
    }

    pub fn effective(&self) -> Result<Effective> {
        let law = CellLaw::from_config(&self.medium);
        let rows = experiment::corrector_ensemble(&law, self.l, self.per_cell, self.corrector_samples, CorrectorOptions::default(), &RngKey::root(self.medium.seed).child(1))?;
        experiment::effective(self.medium.a_b, &rows, &law, self.medium.k0, 4000, 24)
    }

    /// Covariances of the same cell law, with the `L - 2` rerun.
    pub fn covariance_config(&self, outer: usize) -> CovarianceConfig {
        CovarianceConfig {
            nu0: self.medium.nu0.clone(),
            nu1: self.medium.nu1.clone(),
            xi: self.medium.xi,
            k0: self.medium.k0,
            l: 5,
            outer,
            n_mc_samples: 2000,
            l_sensitivity: true,
            ..sanity_covariance_config()
        }
    }

    fn at_eta(&self, eta: f64) -> MediumConfig {
        MediumConfig { eta, ..self.medium.clone() }
    }
}

/// The two-scale error decreases strictly along the eta sweep.
pub fn two_scale_trend(spec: &HeterogeneousSpec) -> Result<Vec<Check>> {
    let eff = spec.effective()?;
    let mut means = vec![];
    let mut detail = vec![];
    for &eta in &spec.etas {
        let p = experiment::mc_point(&spec.at_eta(eta), spec.grid, spec.krylov, &spec.f, &spec.g, spec.samples, Some((&eff, spec.delta)), &RngKey::root(spec.medium.seed))?;
        let (m, se) = p.two_scale.expect("two-scale error requested");
        detail.push(format!("eta = 1/{:.0}: {m:.4} +- {se:.4}", 1.0 / eta));
        means.push(m);
    }
    let worst = means.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut c = Check::within("two-scale error strictly decreasing (max successive change)", worst, f64::NEG_INFINITY, 0.0);
    c.passed = worst < 0.0;
    Ok(vec![c.with_detail(detail.join("; "))])
}

/// Empirical second moments approach the limit along the sweep, and the
/// finest point lies within the combined uncertainty band.
pub fn end_to_end(spec: &HeterogeneousSpec, cov: &CovarianceConfig, noise_draws: usize) -> Result<Vec<Check>> {
    let eff = spec.effective()?;
    let report = covariance_set(cov, &RngKey::root(spec.medium.seed).child(2))?;
    let reduced = report.reduced.as_ref().map(|r| &r.set);
    let lim = experiment::limit_run(&spec.medium, spec.grid, spec.krylov, &eff, &spec.f, &spec.g, &report.set, reduced, spec.delta, noise_draws, &RngKey::root(spec.medium.seed))?;
    let points: Vec<_> = spec
        .etas
        .iter()
        .map(|&eta| experiment::mc_point(&spec.at_eta(eta), spec.grid, spec.krylov, &spec.f, &spec.g, spec.samples, None, &RngKey::root(spec.medium.seed)))
        .collect::<Result<_>>()?;
    let cmp = experiment::compare(&points, &lim);
    let rows: Vec<String> = cmp.rows.iter().map(|r| format!("eta = 1/{:.0}: {:.4e} +- {:.1e} (limit {:.4e}, band {:.1e})", 1.0 / r.eta, r.e_abs2, r.e_abs2_stderr, r.limit, r.band)).collect();
    let last = cmp.rows.last().expect("non-empty sweep");
    let d = &cmp.decomposition;
    let flag = |name: &str, ok: bool, measured: f64| Check { passed: ok, ..Check::at_most(name, measured, f64::INFINITY) };
    Ok(vec![
        flag("end-to-end: distance to the limit decreases with eta", cmp.monotone, last.distance).with_detail(rows.join("; ")),
        flag("end-to-end: finest eta within the combined band", cmp.finest_within_band, last.distance / last.band).with_detail(format!(
            "distance {:.3e}; band = mc {:.2e} (+) covariance {:.2e} + L {:.2e} + quadrature {:.2e}",
            last.distance, d.mc_stderr, d.covariance_stderr, d.l_sensitivity, d.quadrature_error
        )),
    ])
}
