use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;

use wavefluct::laws::{ALaw, Nu0, RhoLaw, ThetaLaw, DEFAULT_MAX_ATTEMPTS};
use wavefluct::medium::{
    coefficient_at, resample, sample_inclusion, sample_medium, sample_window, shift_medium, CellLaw, CellWindow, Component,
    DomainB, InclusionParams, MediumConfig, MediumSample, SwapSpec, ZSpec,
};
use wavefluct::rng::RngKey;

fn centered(rho: f64) -> Nu0 {
    Nu0 { theta: ThetaLaw::Point { theta: [0.5; 3] }, rho: RhoLaw::Point { rho } }
}

fn a_law() -> ALaw {
    ALaw::Rect { re: [1.0, 3.0], im: [0.5, 1.5] }
}

fn law() -> CellLaw {
    CellLaw {
        nu0: Nu0 { theta: ThetaLaw::Uniform, rho: RhoLaw::Uniform { lo: 0.1, hi: 0.2 } },
        nu1: a_law(),
        xi: 0.05,
        max_attempts: DEFAULT_MAX_ATTEMPTS,
    }
}

fn config(eta: f64) -> MediumConfig {
    let l = law();
    MediumConfig {
        eta,
        k0: 3.0,
        a_b: 0.8,
        domain_b: DomainB::Box { lo: [-0.5; 3], hi: [0.5; 3] },
        xi: l.xi,
        nu0: l.nu0,
        nu1: l.nu1,
        delta_margin: eta,
        seed: 4,
        z: ZSpec::default(),
        max_attempts: DEFAULT_MAX_ATTEMPTS,
    }
}

#[test]
fn point_mass_is_returned_as_is() {
    let p = sample_inclusion(&centered(0.25), &a_law(), 0.1, &RngKey::root(1)).unwrap();
    assert_eq!(p.theta, [0.5; 3]);
    assert_eq!(p.rho, 0.25);
    assert!(p.a.im > 0.0);
}

#[test]
fn inadmissible_point_mass_is_an_error() {
    // 0.5 - 0.45 = 0.05 < 0.45 + 0.1
    assert!(sample_inclusion(&centered(0.45), &a_law(), 0.1, &RngKey::root(1)).is_err());
}

/// E{rho} for rho ~ U[lo, hi] and uniform theta conditioned on
/// dist(theta, dZ) > rho + xi: the acceptance is (1 - 2 (rho + xi))^3.
fn conditioned_rho_moments(lo: f64, hi: f64, xi: f64) -> (f64, f64) {
    let n = 2000;
    let dr = (hi - lo) / n as f64;
    let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let r = lo + i as f64 * dr;
        let simpson = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let w = simpson * (1.0 - 2.0 * (r + xi)).powi(3);
        w0 += w;
        w1 += w * r;
        w2 += w * r * r;
    }
    let mean = w1 / w0;
    (mean, w2 / w0 - mean * mean)
}

#[test]
fn conditioned_rho_mean_matches_quadrature() {
    let l = law();
    let n = 100_000;
    let root = RngKey::root(77);
    let mean = (0..n).map(|i| sample_inclusion(&l.nu0, &l.nu1, l.xi, &root.child(i)).unwrap().rho).sum::<f64>() / n as f64;
    let (truth, var) = conditioned_rho_moments(0.1, 0.2, l.xi);
    let se = (var / n as f64).sqrt();
    assert!((mean - truth).abs() < 3.0 * se, "mean {mean} vs {truth} (stderr {se:e})");
    // the conditioning is visible at this sample size
    assert!((0.15 - truth) > 10.0 * se);
}

#[test]
fn cells_enclosed_in_b() {
    let s = sample_medium(&config(0.25), &RngKey::root(2)).unwrap();
    // closed cells [0.25 j, 0.25 (j + 1)] inside the open box (-0.5, 0.5)^3
    let brute = (-4..4i64).filter(|&j| j as f64 * 0.25 > -0.5 && (j + 1) as f64 * 0.25 < 0.5).count();
    assert_eq!(s.cells.len(), brute.pow(3));
    assert_eq!(s.cells.len(), 8);
    assert!(sample_medium(&MediumConfig { delta_margin: 1.5, ..config(1.5) }, &RngKey::root(2)).unwrap().cells.is_empty());
}

#[test]
fn identical_keys_give_identical_samples() {
    let cfg = config(0.1);
    let a = sample_medium(&cfg, &RngKey::root(cfg.seed)).unwrap();
    let b = sample_medium(&cfg, &RngKey::root(cfg.seed)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_medium(&cfg, &RngKey::root(cfg.seed + 1)).unwrap());
}

#[test]
fn coefficient_at_an_inclusion_center() {
    let cfg = MediumConfig { nu1: ALaw::Point { a: Complex64::new(2.0, 1.0) }, ..config(0.1) };
    let s = sample_medium(&cfg, &RngKey::root(3)).unwrap();
    assert_eq!(coefficient_at(&s, &cfg, [0.9, 0.0, 0.0]), Complex64::new(1.0, 0.0));
    for (j, p) in s.params().take(5) {
        let c: Vec<f64> = (0..3).map(|k| 0.1 * (j[k] as f64 - s.z[k] + p.theta[k])).collect();
        let v = coefficient_at(&s, &cfg, [c[0], c[1], c[2]]);
        assert!((v - Complex64::new(0.02, 0.01)).norm() < 1e-15, "{v}");
    }
}

#[test]
fn theta_swap_is_independent_of_the_original() {
    let l = law();
    let n = 10_000;
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let s = sample_window(&l, &RngKey::root(i), CellWindow { lo: [0; 3], hi: [2, 1, 1] }).unwrap();
        let swap = SwapSpec { alpha: Component::Theta, set: [[0, 0, 0]].into(), j: [1, 0, 0], star_mode: false };
        let t = resample(&s, &l, &swap, &RngKey::root(1 << 40 | i)).unwrap();
        let (old, new) = (&s.cells[&[0, 0, 0]].params, &t.cells[&[0, 0, 0]].params);
        assert_eq!(old.a, new.a);
        assert_eq!(s.cells[&[1, 0, 0]], t.cells[&[1, 0, 0]]);
        pairs.push((old.rho, new.rho, old.theta[0], new.theta[0]));
    }
    type Pick = dyn Fn(&(f64, f64, f64, f64)) -> (f64, f64);
    let corr = |x: &Pick| {
        let v: Vec<(f64, f64)> = pairs.iter().map(x).collect();
        let m = v.len() as f64;
        let (mx, my) = (v.iter().map(|p| p.0).sum::<f64>() / m, v.iter().map(|p| p.1).sum::<f64>() / m);
        let sxy: f64 = v.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = v.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let syy: f64 = v.iter().map(|p| (p.1 - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    };
    let bound = 3.0 / (n as f64).sqrt();
    assert!(corr(&|p| (p.0, p.1)).abs() < bound);
    assert!(corr(&|p| (p.2, p.3)).abs() < bound);
}

fn window_sample(seed: u64) -> MediumSample {
    sample_window(&law(), &RngKey::root(seed), CellWindow::cube(6)).unwrap()
}

fn sorted_params(s: &MediumSample) -> Vec<[u64; 6]> {
    let bits = |p: &InclusionParams| [p.theta[0].to_bits(), p.theta[1].to_bits(), p.theta[2].to_bits(), p.rho.to_bits(), p.a.re.to_bits(), p.a.im.to_bits()];
    let mut v: Vec<_> = s.params().map(|(_, p)| bits(p)).collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shifts_compose(seed in 0u64..1000, x in prop::array::uniform3(0.0..1.5f64), y in prop::array::uniform3(0.0..1.5f64)) {
        let s = window_sample(seed);
        let a = shift_medium(&shift_medium(&s, x, None).unwrap(), y, None).unwrap();
        let xy = [x[0] + y[0], x[1] + y[1], x[2] + y[2]];
        let b = shift_medium(&s, xy, None).unwrap();
        prop_assert_eq!(&a.cells, &b.cells);
        for k in 0..3 {
            prop_assert!((a.z[k] - b.z[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn shifts_preserve_the_parameter_multiset(seed in 0u64..1000, x in prop::array::uniform3(-3.0..3.0f64)) {
        let s = window_sample(seed);
        let t = shift_medium(&s, x, None).unwrap();
        prop_assert_eq!(sorted_params(&s), sorted_params(&t));
        prop_assert_eq!(s.cells.len(), t.cells.len());
    }

    #[test]
    fn disjoint_resamples_commute(seed in 0u64..1000, k1 in 0u64..1000, split in 1usize..20, a_first in any::<bool>()) {
        let l = law();
        let s = window_sample(seed);
        let cells: Vec<[i64; 3]> = s.cells.keys().copied().collect();
        let j = cells[0];
        let s1: BTreeSet<_> = cells[1..=split].iter().copied().collect();
        let s2: BTreeSet<_> = cells[split + 1..split + 8].iter().copied().collect();
        let alpha = if a_first { Component::A } else { Component::Theta };
        let sw = |set: &BTreeSet<[i64; 3]>, alpha| SwapSpec { alpha, set: set.clone(), j, star_mode: false };
        let key = RngKey::root(k1);
        let ab = resample(&resample(&s, &l, &sw(&s1, alpha), &key).unwrap(), &l, &sw(&s2, Component::Theta), &key).unwrap();
        let ba = resample(&resample(&s, &l, &sw(&s2, Component::Theta), &key).unwrap(), &l, &sw(&s1, alpha), &key).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn coefficient_takes_three_values(seed in 0u64..200, pts in prop::collection::vec(prop::array::uniform3(-0.7..0.7f64), 200)) {
        let cfg = config(0.1);
        let s = sample_medium(&cfg, &RngKey::root(seed)).unwrap();
        for x in pts {
            let c = coefficient_at(&s, &cfg, x);
            prop_assert!(c.im >= 0.0);
            match s.inclusion_at(x).filter(|_| cfg.domain_b.contains_closed(x)) {
                Some(j) => {
                    prop_assert!((c - 0.01 * s.cells[&j].params.a).norm() < 1e-15);
                    prop_assert!(c.im > 0.0);
                }
                None if cfg.domain_b.contains_closed(x) => prop_assert_eq!(c, Complex64::new(0.8, 0.0)),
                None => prop_assert_eq!(c, Complex64::new(1.0, 0.0)),
            }
        }
    }
}
