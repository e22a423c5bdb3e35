#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;
use proptest::prelude::*;

use wavefluct::cell::corrector::{solve_corrector, solve_modified_corrector, CorrectorOptions};
use wavefluct::cell::laplace::CgOptions;
use wavefluct::cell::lambda::n_value;
use wavefluct::cell::SupercellMedium;
use wavefluct::laws::{ALaw, Nu0, RhoLaw, ThetaLaw, DEFAULT_MAX_ATTEMPTS};
use wavefluct::medium::InclusionParams;
use wavefluct::mnstats::{
    conditional_mean_m, covariance_set, m_tensor, n_monte_carlo, n_statistics, CovarianceConfig, NQuadrature,
};
use wavefluct::rng::RngKey;
use wavefluct::stats::loglog_slope;

fn a0() -> Complex64 {
    Complex64::new(2.0, 1.0)
}

fn config(nu0: Nu0, nu1: ALaw, l: usize, outer: usize, inner: usize) -> CovarianceConfig {
    CovarianceConfig {
        nu0,
        nu1,
        xi: 0.05,
        k0: 3.0,
        l,
        per_cell: 16,
        outer,
        inner,
        corrector: CorrectorOptions { cg: CgOptions { tol: 1e-10, max_iter: 5000 }, ..Default::default() },
        quadrature: NQuadrature::default(),
        n_mc_samples: 0,
        l_sensitivity: false,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
    }
}

fn point_nu0(rho: f64) -> Nu0 {
    Nu0 { theta: ThetaLaw::Point { theta: [0.5; 3] }, rho: RhoLaw::Point { rho } }
}

fn random_nu0() -> Nu0 {
    Nu0 { theta: ThetaLaw::Box { lo: [0.42; 3], hi: [0.58; 3] }, rho: RhoLaw::Uniform { lo: 0.25, hi: 0.3 } }
}

#[test]
fn two_point_rho_law_matches_closed_form() {
    let (r1, r2, p) = (0.15, 0.3, 0.3);
    let nu0 = Nu0 { theta: ThetaLaw::Point { theta: [0.5; 3] }, rho: RhoLaw::TwoPoint { values: [r1, r2], p } };
    let s = n_statistics(&nu0, &ALaw::Point { a: a0() }, 0.05, 3.0, NQuadrature::default()).unwrap();
    let d = n_value(r1, a0(), 3.0).unwrap() - n_value(r2, a0(), 3.0).unwrap();
    let star = p * (1.0 - p) * d.norm_sqr();
    let plain = p * (1.0 - p) * d * d;
    assert!((s.c_theta_star - star).abs() <= 1e-10 * star.max(1e-300));
    assert!((s.c_theta - plain).norm() <= 1e-10 * plain.norm());
    // deterministic a: no a-fluctuation
    assert_eq!(s.c_a_star, 0.0);
    assert_eq!(s.c_a, Complex64::new(0.0, 0.0));
}

#[test]
fn two_point_a_law_closed_form() {
    let (b1, b2, q) = (Complex64::new(2.0, 1.0), Complex64::new(0.5, 3.0), 0.6);
    let s = n_statistics(&point_nu0(0.3), &ALaw::TwoPoint { values: [b1, b2], p: q }, 0.05, 3.0, NQuadrature::default())
        .unwrap();
    let d = n_value(0.3, b1, 3.0).unwrap() - n_value(0.3, b2, 3.0).unwrap();
    assert!((s.c_a_star - q * (1.0 - q) * d.norm_sqr()).abs() <= 1e-10 * s.c_a_star);
    assert_eq!(s.c_theta_star, 0.0);
}

#[test]
fn quadrature_and_monte_carlo_agree_on_c_theta_star() {
    let nu0 = Nu0 { theta: ThetaLaw::Uniform, rho: RhoLaw::Uniform { lo: 0.1, hi: 0.35 } };
    let nu1 = ALaw::Rect { re: [0.5, 3.0], im: [0.5, 2.0] };
    let q = n_statistics(&nu0, &nu1, 0.05, 3.0, NQuadrature::default()).unwrap();
    let mc = n_monte_carlo(&nu0, &nu1, 0.05, 3.0, 20_000, &RngKey::root(3), DEFAULT_MAX_ATTEMPTS).unwrap();
    assert!((mc.c_theta_star - q.c_theta_star).abs() <= 4.0 * mc.c_theta_star_stderr, "{mc:?} vs {q:?}");
    assert!((mc.c_theta - q.c_theta).norm() <= 4.0 * mc.c_theta_stderr * std::f64::consts::SQRT_2);
    assert!(q.quadrature_error < 1e-8 * q.c_theta_star);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pseudo_covariance_bounds(lo in 0.05f64..0.2, span in 0.0f64..0.2, re0 in 0.2f64..3.0, dre in 0.0f64..2.0,
                                im0 in 0.1f64..2.0, dim in 0.0f64..2.0, k0 in 0.5f64..4.0) {
        let nu0 = Nu0 { theta: ThetaLaw::Uniform, rho: RhoLaw::Uniform { lo, hi: lo + span } };
        let nu1 = ALaw::Rect { re: [re0, re0 + dre], im: [im0, im0 + dim] };
        let q = NQuadrature { rho_nodes: 8, a_nodes: 6 };
        if let Ok(s) = n_statistics(&nu0, &nu1, 0.05, k0, q) {
            prop_assert!(s.c_theta_star >= 0.0 && s.c_a_star >= 0.0);
            prop_assert!(s.c_theta.norm() <= s.c_theta_star * (1.0 + 1e-12) + 1e-300);
            prop_assert!(s.c_a.norm() <= s.c_a_star * (1.0 + 1e-12) + 1e-300);
        }
    }
}

#[test]
fn point_mass_conditional_mean_is_the_single_configuration() {
    let cfg = config(point_nu0(0.25), ALaw::Point { a: a0() }, 3, 2, 1);
    let fam = vec![a0(); 27];
    let c = conditional_mean_m([0.5; 3], 0.25, &fam, &cfg, 2, &RngKey::root(1)).unwrap();
    let inc = InclusionParams { theta: [0.5; 3], rho: 0.25, a: a0() };
    let sc = SupercellMedium::new(3, 16, vec![inc; 27]).unwrap();
    let mut sol = solve_corrector(&sc, cfg.corrector).unwrap();
    solve_modified_corrector(&sc, &mut sol, sc.origin_cell(), cfg.corrector).unwrap();
    let direct = m_tensor(&sc, &sol).unwrap().m;
    let scale = direct.0[0][0].abs();
    assert!(c.m.max_abs_diff(&direct) <= 1e-7 * scale, "{:?} vs {:?}", c.m, direct);
    assert!(c.stderr.0.iter().flatten().all(|s| *s == 0.0));
}

#[test]
fn a_family_does_not_enter_m() {
    let cfg = config(random_nu0(), ALaw::Point { a: a0() }, 2, 2, 1);
    let f1 = vec![a0(); 8];
    let f2: Vec<Complex64> = (0..8).map(|i| Complex64::new(0.3 + i as f64, 0.1 + 0.2 * i as f64)).collect();
    let key = RngKey::root(9);
    let m1 = conditional_mean_m([0.5; 3], 0.27, &f1, &cfg, 2, &key).unwrap();
    let m2 = conditional_mean_m([0.5; 3], 0.27, &f2, &cfg, 2, &key).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn inner_average_variance_scales_inversely() {
    let cfg = config(random_nu0(), ALaw::Point { a: a0() }, 2, 2, 1);
    let fam = vec![a0(); 8];
    let reps = 24;
    let sizes = [1usize, 2, 4, 8];
    let mut vars = Vec::new();
    for &m in &sizes {
        let vals: Vec<f64> = (0..reps)
            .map(|r| {
                let key = RngKey::root(100).child(m as u64).child(r as u64);
                let c = conditional_mean_m([0.5; 3], 0.27, &fam, &cfg, m, &key).unwrap();
                c.m.0[0][0] + c.m.0[1][1] + c.m.0[2][2]
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        vars.push(vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64);
    }
    let x: Vec<f64> = sizes.iter().map(|s| *s as f64).collect();
    let slope = loglog_slope(&x, &vars);
    assert!((-1.5..=-0.5).contains(&slope), "slope {slope}, variances {vars:?}");
}

#[test]
fn deterministic_laws_give_zero_covariances() {
    let cfg = CovarianceConfig { l_sensitivity: true, ..config(point_nu0(0.25), ALaw::Point { a: a0() }, 3, 3, 1) };
    let r = covariance_set(&cfg, &RngKey::root(5)).unwrap();
    let s = &r.set;
    assert!(s.c_w.iter().flatten().flatten().flatten().all(|v| *v == 0.0));
    assert!(s.c_wn.iter().flatten().all(|v| *v == Complex64::new(0.0, 0.0)));
    assert_eq!((s.c_theta, s.c_theta_star), (Complex64::new(0.0, 0.0), 0.0));
    assert_eq!((s.c_a, s.c_a_star), (Complex64::new(0.0, 0.0), 0.0));
    assert_eq!(r.skipped_solves, 0);
    let red = r.reduced.as_ref().unwrap();
    assert_eq!(red.l, 1);
    assert!(r.max_gauge_check < 1e-6);
}

#[test]
fn random_law_covariances_are_consistent() {
    let nu1 = ALaw::Rect { re: [0.5, 3.0], im: [0.5, 2.0] };
    let cfg = CovarianceConfig { n_mc_samples: 4000, ..config(random_nu0(), nu1, 3, 6, 1) };
    let key = RngKey::root(11);
    let r = covariance_set(&cfg, &key).unwrap();
    let s = &r.set;
    let tr = s.c_w_trace();
    assert!(tr > 0.0);
    assert!(s.c_w_min_eigenvalue() >= -1e-8 * tr);
    let m = s.c_w_matrix();
    for p in 0..9 {
        for q in 0..9 {
            assert_eq!(m[p][q], m[q][p]);
        }
    }
    assert!(s.c_theta.norm() <= s.c_theta_star);
    assert!(s.c_a.norm() <= s.c_a_star);
    for i in 0..3 {
        for j in 0..3 {
            let bound = (s.c_w[i][j][i][j] * s.c_theta_star).sqrt() + 4.0 * s.c_wn_stderr[i][j];
            assert!(s.c_wn[i][j].norm() <= bound, "C_WN[{i}][{j}] = {} > {bound}", s.c_wn[i][j]);
        }
    }
    let mc = r.n_monte_carlo.as_ref().unwrap();
    assert!((mc.c_theta_star - s.c_theta_star).abs() <= 4.0 * mc.c_theta_star_stderr);
    // reproducible
    let again = covariance_set(&cfg, &key).unwrap();
    assert_eq!(r, again);
}
