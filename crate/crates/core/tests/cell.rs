use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use wavefluct::cell::corrector::{mismatch_profile, solve_corrector, solve_modified_corrector, CorrectorOptions};
use wavefluct::cell::effective::a_eff;
use wavefluct::cell::lambda::{kappa, lambda_closed_form, lambda_series, mu_eff, n_value, LambdaSpec, MarginalQuadrature};
use wavefluct::cell::laplace::CgOptions;
use wavefluct::cell::supercell::Perforation;
use wavefluct::cell::SupercellMedium;
use wavefluct::laws::{ALaw, Node, Nu0, RhoLaw, ThetaLaw, DEFAULT_MAX_ATTEMPTS};
use wavefluct::medium::{sample_window, CellLaw, CellWindow, InclusionParams};
use wavefluct::rng::RngKey;
use wavefluct::stats::loglog_slope;

type C = Complex64;

fn spec(n_modes: usize) -> LambdaSpec {
    LambdaSpec { k0: 1.0, a: C::new(2.0, 1.0), rho: 0.3, n_modes }
}

/// RK4 on `L'' + (2/r) L' + kappa^2 L = 0` from the regular start
/// `L(0) = 1, L'(0) = 0`, rescaled so that `L(rho) = 1`.
fn shooting(k0: f64, a: C, rho: f64, r: f64) -> C {
    let k2 = kappa(k0, a).powi(2);
    let steps = 20_000;
    let dr = rho / steps as f64;
    let rhs = |s: f64, y: [C; 2]| -> [C; 2] {
        // L'(s) / s -> L''(0) = -kappa^2 / 3 at the origin
        let damp = if s == 0.0 { -k2 / 3.0 } else { y[1] / s };
        [y[1], -2.0 * damp - k2 * y[0]]
    };
    let mut y = [C::new(1.0, 0.0), C::new(0.0, 0.0)];
    let mut at_r = None;
    for i in 0..steps {
        let s = i as f64 * dr;
        if at_r.is_none() && s >= r - 0.5 * dr {
            at_r = Some(y[0]);
        }
        let k1 = rhs(s, y);
        let k2_ = rhs(s + dr / 2.0, [y[0] + dr / 2.0 * k1[0], y[1] + dr / 2.0 * k1[1]]);
        let k3 = rhs(s + dr / 2.0, [y[0] + dr / 2.0 * k2_[0], y[1] + dr / 2.0 * k2_[1]]);
        let k4 = rhs(s + dr, [y[0] + dr * k3[0], y[1] + dr * k3[1]]);
        for c in 0..2 {
            y[c] += dr / 6.0 * (k1[c] + 2.0 * k2_[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    at_r.unwrap_or(y[0]) / y[0]
}

#[test]
fn closed_form_matches_shooting() {
    let s = spec(1);
    let v = lambda_closed_form(&s, 0.15).unwrap();
    let oracle = shooting(s.k0, s.a, s.rho, 0.15);
    assert!((v - oracle).norm() < 1e-10, "{v} vs {oracle}");
    assert_eq!(lambda_closed_form(&s, s.rho).unwrap(), C::new(1.0, 0.0));
}

#[test]
fn stiff_inclusions_give_one() {
    let s = LambdaSpec { a: C::new(1e9, 1e9), ..spec(1) };
    for i in 0..=30 {
        let r = s.rho * i as f64 / 30.0;
        assert!((lambda_closed_form(&s, r).unwrap() - 1.0).norm() < 1e-9);
    }
}

#[test]
fn series_converges_to_closed_form() {
    let s = spec(200);
    let r = s.rho / 2.0;
    let err = (lambda_series(&s, r) - lambda_closed_form(&s, r).unwrap()).norm();
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn series_error_decreases_with_modes() {
    let grid: Vec<f64> = (0..40).map(|i| 0.3 * i as f64 / 40.0).collect();
    let sup = |n: usize| {
        let s = spec(n);
        grid.iter().map(|&r| (lambda_series(&s, r) - lambda_closed_form(&s, r).unwrap()).norm()).fold(0.0, f64::max)
    };
    let errs: Vec<f64> = [10, 20, 40, 80, 160, 320].iter().map(|&n| sup(n)).collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
}

#[test]
fn series_terms_vanish_like_one_over_a() {
    let s = spec(50);
    let defect = |a: f64| (1.0 - lambda_series(&LambdaSpec { a: C::new(a, 0.0), ..s }, 0.1)) * a;
    let (d1, d2) = (defect(1e6), defect(1e7));
    assert!((d1 - d2).norm() < 1e-4 * d2.norm(), "{d1} vs {d2}");
    assert!(d2.norm() > 1e-6);
}

/// Adaptive Simpson on a complex integrand.
fn adaptive(f: &dyn Fn(f64) -> C, a: f64, b: f64, tol: f64) -> C {
    fn simpson(f: &dyn Fn(f64) -> C, a: f64, fa: C, b: f64, fb: C) -> (C, f64, C) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> C, a: f64, fa: C, b: f64, fb: C, whole: C, m: f64, fm: C, tol: f64, depth: u32) -> C {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1) + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

#[test]
fn n_value_matches_radial_quadrature() {
    let s = spec(1);
    let oracle = adaptive(&|r| 4.0 * PI * r * r * (1.0 + lambda_closed_form(&s, r).unwrap()), 0.0, s.rho, 1e-13);
    let v = n_value(s.rho, s.a, s.k0).unwrap();
    assert!((v - oracle).norm() <= 1e-8, "{v} vs {oracle}");
}

#[test]
fn n_value_limits() {
    let rho = 0.3;
    let stiff = n_value(rho, C::new(1e10, 1e10), 1.0).unwrap();
    assert!((stiff - 2.0 * 4.0 / 3.0 * PI * rho.powi(3)).norm() < 1e-9);
    assert_eq!(n_value(0.0, C::new(2.0, 1.0), 1.0).unwrap(), C::new(0.0, 0.0));
}

fn point_quadrature(rho: f64, a: C) -> MarginalQuadrature {
    MarginalQuadrature { rho: vec![Node { x: rho, w: 1.0 }], a: vec![Node { x: a, w: 1.0 }] }
}

#[test]
fn mu_eff_routes_agree_for_real_a() {
    for (rho, a) in [(0.3, 2.0), (0.2, 0.7), (0.45, 5.0)] {
        let m = mu_eff(&point_quadrature(rho, C::new(a, 0.0)), 3.0, 4000).unwrap();
        assert!((m.series - m.volume_route).norm() <= 1e-8, "rho {rho} a {a}: {} vs {}", m.series, m.volume_route);
    }
}

#[test]
fn mu_eff_without_inclusions_is_one() {
    let m = mu_eff(&point_quadrature(0.0, C::new(2.0, 1.0)), 3.0, 100).unwrap();
    assert_eq!(m.series, C::new(1.0, 0.0));
    assert_eq!(m.volume_route, C::new(1.0, 0.0));
}

#[test]
fn lossy_inclusions_give_negative_imaginary_mu_eff() {
    for rho in [0.1, 0.25, 0.4] {
        for re in [0.5, 1.0, 3.0] {
            for im in [0.1, 1.0, 4.0] {
                for k0 in [1.0, 3.0] {
                    let m = mu_eff(&point_quadrature(rho, C::new(re, im)), k0, 2000).unwrap();
                    assert!(m.volume_route.im < 0.0, "rho {rho} a {re}+{im}i k0 {k0}: {}", m.volume_route);
                }
            }
        }
    }
}

fn inc(theta: [f64; 3], rho: f64) -> InclusionParams {
    InclusionParams { theta, rho, a: C::new(2.0, 1.0) }
}

fn tight(tol: f64) -> CorrectorOptions {
    CorrectorOptions { cg: CgOptions { tol, max_iter: 20_000 }, ..Default::default() }
}

#[test]
fn single_sphere_corrector_is_a_dipole() {
    let (rho, n) = (0.12, 64);
    let sc = SupercellMedium::single(1, n, inc([0.5; 3], rho)).unwrap();
    let sol = solve_corrector(&sc, tight(1e-10)).unwrap();
    let h = sc.h();
    let dims = sc.dims();
    for i in 0..3 {
        let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
        for v in 0..dims.len() {
            let c = dims.coords(v);
            let y: Vec<f64> = (0..3).map(|d| (c[d] as f64 + 0.5) * h - 0.5).collect();
            let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            if (r - 2.0 * rho).abs() > 0.5 * h {
                continue;
            }
            let dipole = rho.powi(3) / 2.0 * y[i] / r.powi(3);
            err = err.max((sol.full.phi[i][v] - dipole).abs());
            scale = scale.max(dipole.abs());
        }
        assert!(scale > 0.0);
        assert!(err <= 0.1 * scale, "component {i}: {err:e} vs {scale:e}");
    }
}

fn law() -> CellLaw {
    CellLaw {
        nu0: Nu0 { theta: ThetaLaw::Box { lo: [0.4; 3], hi: [0.6; 3] }, rho: RhoLaw::Uniform { lo: 0.25, hi: 0.32 } },
        nu1: ALaw::Rect { re: [1.0, 3.0], im: [0.5, 1.5] },
        xi: 0.05,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
    }
}

fn random_supercell(l: usize, per_cell: usize, seed: u64) -> SupercellMedium {
    let s = sample_window(&law(), &RngKey::root(seed), CellWindow::cube(l as i64)).unwrap();
    SupercellMedium::from_sample(&s, CellWindow::cube(l as i64), per_cell).unwrap()
}

#[test]
fn modified_corrector_ignores_the_removed_cell() {
    let sc = random_supercell(3, 16, 8);
    let j = sc.origin_cell();
    let run = |sc: &SupercellMedium| {
        let mut sol = solve_corrector(sc, tight(1e-9)).unwrap();
        solve_modified_corrector(sc, &mut sol, j, tight(1e-9)).unwrap();
        sol.minus.unwrap().1.phi
    };
    let base = run(&sc);
    let idx = sc.cell_index(j);
    let mut changed_a = sc.clone();
    changed_a.cells[idx].a = C::new(7.0, 0.1);
    assert_eq!(run(&changed_a), base);
    // moving the removed inclusion changes the full corrector, and with it
    // the initial guess, but not the linear system of the modified one
    let mut moved = sc.clone();
    moved.cells[idx].theta = [0.45, 0.55, 0.5];
    moved.cells[idx].rho = 0.3;
    let p = Perforation::of_supercell(&moved, Some(j), Default::default());
    let q = Perforation::of_supercell(&sc, Some(j), Default::default());
    assert_eq!(p.fluid, q.fluid);
    assert_eq!(p.faces, q.faces);
}

#[test]
fn modified_corrector_mismatch_decays_like_a_dipole_gradient() {
    let (l, per_cell) = (7, 14);
    let sc = SupercellMedium::single(l, per_cell, inc([0.5; 3], 0.3)).unwrap();
    let j = sc.origin_cell();
    let mut sol = solve_corrector(&sc, tight(1e-11)).unwrap();
    solve_modified_corrector(&sc, &mut sol, j, tight(1e-11)).unwrap();
    let prof = mismatch_profile(&sc, &sol);
    // dyadic shells: mean mismatch in [d, 1.1 d)
    let (mut ds, mut ms) = (vec![], vec![]);
    let mut d = 0.8;
    while d < 3.2 {
        let shell: Vec<f64> = prof.iter().filter(|(r, _)| *r >= d && *r < 1.1 * d).map(|(_, m)| *m).collect();
        ds.push(d * 1.05);
        ms.push(shell.iter().sum::<f64>() / shell.len() as f64);
        d *= 1.25;
    }
    let slope = loglog_slope(&ds, &ms);
    assert!((-3.6..=-2.4).contains(&slope), "slope {slope} from {ms:?}");
}

#[test]
fn a_eff_is_symmetric_positive_definite() {
    let sols: Vec<_> = (0..4).map(|s| solve_corrector(&random_supercell(3, 16, 40 + s), tight(1e-9)).unwrap()).collect();
    let e = a_eff(0.8, sols.iter().map(|s| &s.full)).unwrap();
    let norm = e.a_eff.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    assert!(e.eigenvalues.iter().all(|l| *l > 0.0), "{:?}", e.eigenvalues);
    assert!(e.asymmetry <= 1e-3 * norm, "{} vs {norm}", e.asymmetry);
    assert!(e.eigenvalues.iter().all(|l| *l < 0.8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn series_matches_closed_form_inside(rho in 0.05..0.5f64, re in 0.3..5.0f64, im in 0.05..3.0f64, k0 in 0.5..4.0f64, t in 0.0..0.95f64) {
        let s = LambdaSpec { k0, a: C::new(re, im), rho, n_modes: 4000 };
        let r = t * rho;
        let err = (lambda_series(&s, r) - lambda_closed_form(&s, r).unwrap()).norm();
        prop_assert!(err < 1e-3, "err {err:e}");
    }

    #[test]
    fn kappa_has_negative_imaginary_part(re in -5.0..5.0f64, im in 0.01..5.0f64, k0 in 0.1..10.0f64) {
        prop_assert!(kappa(k0, C::new(re, im)).im < 0.0);
    }
}
