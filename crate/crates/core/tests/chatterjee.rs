use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

use wavefluct::chatterjee::{cov_estimator, cov_exact_enumeration, Comp, DiscreteLaw, DEFAULT_STATE_BOUND};
use wavefluct::rng::RngKey;

type C = Comp<f64, f64>;

fn rademacher() -> DiscreteLaw<f64, f64> {
    DiscreteLaw { theta: vec![(-1.0, 0.5), (1.0, 0.5)], a: vec![(-1.0, 0.5), (1.0, 0.5)] }
}

fn product(v: &[C]) -> Complex64 {
    Complex64::new(v[0].theta * v[1].theta, 0.0)
}

fn rademacher_sampler(key: &RngKey) -> Vec<C> {
    let mut rng = key.rng();
    let mut s = || if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    (0..2).map(|_| C { theta: s(), a: s() }).collect()
}

/// The swap formula for two components written out by hand: subsets of
/// {0, 1} other than the full set are {}, {0}, {1}, with weights
/// 1/(C(2,0) 2) = 1/2 and 1/(C(2,1) 1) = 1/2.
fn two_component_rhs(f: &dyn Fn(&[C]) -> f64, law: &DiscreteLaw<f64, f64>) -> f64 {
    let states: Vec<(C, f64)> = law
        .theta
        .iter()
        .flat_map(|&(t, pt)| law.a.iter().map(move |&(a, pa)| (C { theta: t, a }, pt * pa)))
        .collect();
    let mut total = 0.0;
    for (x0, p0) in &states {
        for (x1, p1) in &states {
            for (y0, q0) in &states {
                for (y1, q1) in &states {
                    let p = p0 * p1 * q0 * q1;
                    let x = [*x0, *x1];
                    let xp = [*y0, *y1];
                    let mut acc = 0.0;
                    for theta_part in [true, false] {
                        let take = |c: &C, from: &C| if theta_part { C { theta: from.theta, a: c.a } } else { C { theta: c.theta, a: from.a } };
                        // for the a-swap every theta-part also comes from X'
                        let other = |c: &C, from: &C| if theta_part { *c } else { C { theta: from.theta, a: c.a } };
                        for subset in [0u8, 1, 2] {
                            let star: Vec<C> = (0..2).map(|i| if subset >> i & 1 == 1 { take(&x[i], &xp[i]) } else { x[i] }).collect();
                            let star: Vec<C> = (0..2).map(|i| other(&star[i], &xp[i])).collect();
                            for j in (0..2).filter(|j| subset >> j & 1 == 0) {
                                let mut xj = x.to_vec();
                                xj[j] = take(&x[j], &xp[j]);
                                let mut sj = star.clone();
                                sj[j] = take(&star[j], &xp[j]);
                                acc += 0.5 * (f(&x) - f(&xj)) * (f(&star) - f(&sj));
                            }
                        }
                    }
                    total += 0.5 * p * acc;
                }
            }
        }
    }
    total
}

#[test]
fn rademacher_product_matches_brute_force() {
    let laws = vec![rademacher(); 2];
    let r = cov_exact_enumeration(&product, &product, &laws, DEFAULT_STATE_BOUND).unwrap();
    let brute = two_component_rhs(&|v| v[0].theta * v[1].theta, &rademacher());
    // Var(theta_1 theta_2) = 1 for independent signs
    assert!((r.lhs.re - 1.0).abs() < 1e-14 && r.lhs.im == 0.0);
    assert!((r.rhs.re - brute).abs() < 1e-14, "{} vs {brute}", r.rhs.re);
    assert!((brute - 1.0).abs() < 1e-14);
}

#[test]
fn brute_force_sees_a_parts_too() {
    let law = DiscreteLaw { theta: vec![(0.0, 0.3), (1.0, 0.7)], a: vec![(2.0, 0.4), (-1.0, 0.6)] };
    let f = |v: &[C]| v[0].theta * v[1].a + v[0].a * v[0].a * v[1].theta;
    let r = cov_exact_enumeration(&|v: &[C]| Complex64::new(f(v), 0.0), &|v: &[C]| Complex64::new(f(v), 0.0), &vec![law.clone(); 2], DEFAULT_STATE_BOUND).unwrap();
    assert!((r.rhs.re - two_component_rhs(&f, &law)).abs() < 1e-12);
}

#[test]
fn estimator_matches_enumeration_on_rademacher_product() {
    let e = cov_estimator(&product, &product, &rademacher_sampler, 2, 100_000, &RngKey::root(11)).unwrap();
    assert!(e.stderr > 0.0);
    let z = (e.estimate - Complex64::new(1.0, 0.0)).norm() / e.stderr;
    assert!(z < 4.0, "estimate {} stderr {} ({z:.2} stderr off)", e.estimate, e.stderr);
}

#[test]
fn estimator_of_a_sum_gives_n_times_the_variance() {
    let n = 5;
    let sampler = |key: &RngKey| {
        let mut rng = key.rng();
        (0..n).map(|_| C { theta: rng.random::<f64>(), a: rng.random::<f64>() }).collect::<Vec<_>>()
    };
    let sum = |v: &[C]| Complex64::new(v.iter().map(|c| c.theta).sum(), 0.0);
    let e = cov_estimator(&sum, &sum, &sampler, n, 100_000, &RngKey::root(12)).unwrap();
    let truth = n as f64 / 12.0;
    assert!((e.estimate.re - truth).abs() < 4.0 * e.stderr, "{} vs {truth} (stderr {})", e.estimate.re, e.stderr);
    assert!(e.estimate.im == 0.0);
}

#[test]
fn estimator_is_unbiased_over_independent_runs() {
    let law = DiscreteLaw { theta: vec![(0.0, 0.25), (1.0, 0.75)], a: vec![(1.0, 0.5), (3.0, 0.5)] };
    let f = |v: &[C]| Complex64::new(v[0].theta * v[1].a, v[1].theta - v[2].a * v[0].theta);
    let h = |v: &[C]| Complex64::new(v[2].theta + v[0].a, v[1].a * v[2].theta);
    let truth = cov_exact_enumeration(&f, &h, &vec![law.clone(); 3], DEFAULT_STATE_BOUND).unwrap().lhs;
    let sampler = |key: &RngKey| {
        let mut rng = key.rng();
        (0..3)
            .map(|_| C { theta: if rng.random_bool(0.75) { 1.0 } else { 0.0 }, a: if rng.random_bool(0.5) { 3.0 } else { 1.0 } })
            .collect::<Vec<_>>()
    };
    let runs: Vec<_> = (0..50).map(|r| cov_estimator(&f, &h, &sampler, 3, 2000, &RngKey::root(100).child(r)).unwrap()).collect();
    let mean = runs.iter().map(|e| e.estimate).sum::<Complex64>() / 50.0;
    let pooled = runs.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / 50.0;
    assert!((mean - truth).norm() < 4.0 * pooled, "mean {mean} truth {truth} pooled stderr {pooled:e}");
}

#[test]
fn constant_function_estimates_zero() {
    let f = |_: &[C]| Complex64::new(-2.0, 0.5);
    let e = cov_estimator(&f, &product, &rademacher_sampler, 2, 5000, &RngKey::root(3)).unwrap();
    assert_eq!(e.estimate, Complex64::new(0.0, 0.0));
    assert_eq!(e.stderr, 0.0);
}

fn two_point() -> impl Strategy<Value = DiscreteLaw<f64, f64>> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.05..0.95f64, -2.0..2.0f64, -2.0..2.0f64, 0.05..0.95f64)
        .prop_map(|(t0, t1, p, a0, a1, q)| DiscreteLaw { theta: vec![(t0, p), (t1, 1.0 - p)], a: vec![(a0, q), (a1, 1.0 - q)] })
}

/// Random complex quadratic in the component parts.
fn quadratic(c: &[f64]) -> impl Fn(&[C]) -> Complex64 + '_ {
    move |v: &[C]| {
        let parts: Vec<f64> = v.iter().flat_map(|x| [x.theta, x.a]).collect();
        let mut z = Complex64::new(c[0], c[1]);
        for (i, p) in parts.iter().enumerate() {
            z += Complex64::new(c[2 + 2 * i], c[3 + 2 * i]) * p;
            let q = parts[(i + 1) % parts.len()];
            z += Complex64::new(c[14 + i], -c[2 + i]) * p * q;
        }
        z
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identity_holds_for_random_laws(
        laws in (1usize..=3).prop_flat_map(|n| prop::collection::vec(two_point(), n)),
        cf in prop::collection::vec(-1.0..1.0f64, 20),
        ch in prop::collection::vec(-1.0..1.0f64, 20),
    ) {
        let (f, h) = (quadratic(&cf), quadratic(&ch));
        let r = cov_exact_enumeration(&f, &h, &laws, DEFAULT_STATE_BOUND).unwrap();
        prop_assert!((r.lhs - r.rhs).norm() <= 1e-12 * (1.0 + r.lhs.norm()));
    }

    #[test]
    fn real_covariance_is_symmetric(
        laws in prop::collection::vec(two_point(), 2),
        cf in prop::collection::vec(-1.0..1.0f64, 20),
        ch in prop::collection::vec(-1.0..1.0f64, 20),
    ) {
        let real = |c: &[f64]| { let c = c.to_vec(); move |v: &[C]| Complex64::new(quadratic(&c)(v).re, 0.0) };
        let (f, h) = (real(&cf), real(&ch));
        let fh = cov_exact_enumeration(&f, &h, &laws, DEFAULT_STATE_BOUND).unwrap();
        let hf = cov_exact_enumeration(&h, &f, &laws, DEFAULT_STATE_BOUND).unwrap();
        prop_assert!((fh.rhs - hf.rhs).norm() <= 1e-12 * (1.0 + fh.lhs.norm()));
    }
}
