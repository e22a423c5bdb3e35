#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wavefluct::grid::{ComplexField, RealField};
use wavefluct::helmholtz::{
    homogenized_coefficients, solve_homogenized, to_complex, weighted_green, Coefficients, GaussianBump, GridSpec,
    HelmholtzSetup, KrylovOptions,
};
use wavefluct::medium::DomainB;
use wavefluct::mnstats::CovarianceSet;

pub const K0: f64 = 3.0;
pub const A_B: f64 = 0.8;
pub const DELTA: f64 = 0.1;

pub fn a_eff() -> [[f64; 3]; 3] {
    [[0.72, 0.01, 0.0], [0.01, 0.70, -0.005], [0.0, -0.005, 0.71]]
}

pub fn mu_eff() -> Complex64 {
    Complex64::new(1.08, 0.03)
}

pub fn unit_box() -> DomainB {
    DomainB::Box { lo: [-0.5; 3], hi: [0.5; 3] }
}

pub fn source() -> GaussianBump {
    GaussianBump { center: [-0.95, 0.1, 0.0], width: 0.1, cutoff: 3.0, amplitude: 1.0 }
}

pub fn test_function() -> GaussianBump {
    GaussianBump { center: [0.95, -0.1, 0.05], width: 0.1, cutoff: 3.0, amplitude: 1.0 }
}

/// Homogenized field, weighted Green's function and test function on one grid.
pub struct LimitCase {
    pub setup: HelmholtzSetup,
    pub coef: Coefficients,
    pub u_h: ComplexField,
    pub green: ComplexField,
    pub g: RealField,
}

/// `h = 1/20` gives a 64^3 grid; the layout is aligned with `B` and `B_delta`
/// for every `h = 1/(20 m)`.
pub fn limit_case(h: f64, tol: f64) -> LimitCase {
    limit_case_with(h, tol, &source(), &test_function())
}

pub fn limit_case_with(h: f64, tol: f64, source: &GaussianBump, test_function: &GaussianBump) -> LimitCase {
    let spec = GridSpec { h, pad: 0.75, pml_width: 0.35, allow_thin_pml: true };
    let setup = HelmholtzSetup::new(&unit_box(), K0, spec, KrylovOptions { tol, ..Default::default() }).unwrap();
    let f = to_complex(&source.sample(&setup.grid));
    let g = test_function.sample(&setup.grid);
    assert!((0..setup.grid.len()).all(|v| !setup.grid.in_pml(v) || g.data[v] == 0.0));
    let u_h = solve_homogenized(&setup, a_eff(), mu_eff(), &f).unwrap().field;
    let green = weighted_green(&setup, a_eff(), mu_eff(), &g).unwrap().field;
    let coef = homogenized_coefficients(&setup, a_eff(), mu_eff());
    LimitCase { setup, coef, u_h, green, g }
}

/// Covariance set read off a random 11x11 PSD matrix `S` (W entries, Re N,
/// Im N) and a random 2x2 PSD block for `N^a`, following `E{W N} = -C^WN`.
pub fn random_covariances(seed: u64, scale: f64) -> (CovarianceSet, [[f64; 11]; 11], [[f64; 2]; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<Vec<f64>> = (0..11).map(|_| (0..11).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let mut s = [[0.0; 11]; 11];
    for i in 0..11 {
        for j in 0..11 {
            s[i][j] = scale * (0..11).map(|k| b[i][k] * b[j][k]).sum::<f64>();
        }
    }
    let ba: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
    let sa = [
        [scale * (ba[0] * ba[0] + ba[1] * ba[1]), scale * (ba[0] * ba[2] + ba[1] * ba[3])],
        [scale * (ba[0] * ba[2] + ba[1] * ba[3]), scale * (ba[2] * ba[2] + ba[3] * ba[3])],
    ];
    let mut c = CovarianceSet::zero();
    for p in 0..9 {
        for q in 0..9 {
            c.c_w[p / 3][p % 3][q / 3][q % 3] = s[p][q];
        }
        c.c_wn[p / 3][p % 3] = -Complex64::new(s[p][9], s[p][10]);
    }
    c.c_theta_star = s[9][9] + s[10][10];
    c.c_theta = Complex64::new(s[9][9] - s[10][10], 2.0 * s[9][10]);
    c.c_a_star = sa[0][0] + sa[1][1];
    c.c_a = Complex64::new(sa[0][0] - sa[1][1], 2.0 * sa[0][1]);
    (c, s, sa)
}
