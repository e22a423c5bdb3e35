//! Covariance decomposition for functions of independent components.
//!
//! Each component splits into a geometric part and a coefficient part. For
//! `f, h : S^n -> C`,
//!
//! ```text
//! Cov(h, f) = 1/2 sum_alpha sum_{A != [n]} 1/(C(n,|A|) (n-|A|))
//!             sum_{j not in A} E{ D^alpha_j h(X) D^alpha_j f(X^{A_alpha,*}) }
//! ```
//!
//! with the bilinear convention `Cov(h, f) = E{h f} - E{h} E{f}`.
//! Component indices are 0-based.

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::medium::Component;
use crate::rng::RngKey;
use crate::stats::{pairwise, ComplexMoments};

/// One component value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comp<T, U> {
    pub theta: T,
    pub a: U,
}

/// `f(x) - f(x with component j's alpha-part taken from xp)`.
pub fn delta<T: Clone, U: Clone, F>(f: &F, x: &[Comp<T, U>], xp: &[Comp<T, U>], j: usize, alpha: Component) -> Complex64
where
    F: Fn(&[Comp<T, U>]) -> Complex64,
{
    let mut y = x.to_vec();
    match alpha {
        Component::Theta => y[j].theta = xp[j].theta.clone(),
        Component::A => y[j].a = xp[j].a.clone(),
    }
    f(x) - f(&y)
}

/// `X^{A_alpha,*}` for the subset encoded by `mask`.
pub fn swapped<T: Clone, U: Clone>(x: &[Comp<T, U>], xp: &[Comp<T, U>], mask: u64, alpha: Component) -> Vec<Comp<T, U>> {
    x.iter()
        .zip(xp)
        .enumerate()
        .map(|(i, (c, cp))| {
            let in_a = mask >> i & 1 == 1;
            match alpha {
                Component::Theta => Comp { theta: if in_a { cp.theta.clone() } else { c.theta.clone() }, a: c.a.clone() },
                Component::A => Comp { theta: cp.theta.clone(), a: if in_a { cp.a.clone() } else { c.a.clone() } },
            }
        })
        .collect()
}

/// Finite law of one component: independent weighted lists for each part.
#[derive(Clone, Debug)]
pub struct DiscreteLaw<T, U> {
    pub theta: Vec<(T, f64)>,
    pub a: Vec<(U, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactCov {
    /// `E{h f} - E{h} E{f}`.
    pub lhs: Complex64,
    /// The swap decomposition.
    pub rhs: Complex64,
}

fn binom(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub const DEFAULT_STATE_BOUND: u128 = 1 << 24;

/// Evaluate both sides by summing over every (X, X') state.
pub fn cov_exact_enumeration<T, U, F, H>(f: &F, h: &H, laws: &[DiscreteLaw<T, U>], bound: u128) -> Result<ExactCov>
where
    T: Clone,
    U: Clone,
    F: Fn(&[Comp<T, U>]) -> Complex64,
    H: Fn(&[Comp<T, U>]) -> Complex64,
{
    let n = laws.len();
    if n == 0 || n > 16 {
        return Err(Error::Config(format!("enumeration needs 1..=16 components, got {n}")));
    }
    // per component: (theta, a, theta', a')
    let radix: Vec<usize> = laws.iter().map(|l| l.theta.len() * l.a.len()).collect();
    let states: u128 = radix.iter().map(|r| (*r as u128) * (*r as u128)).product();
    if states > bound {
        return Err(Error::StateSpace { states, bound });
    }
    let decode = |mut s: u128| -> (Vec<Comp<T, U>>, f64) {
        let mut v = Vec::with_capacity(n);
        let mut p = 1.0;
        for l in laws {
            let (kt, ka) = (l.theta.len() as u128, l.a.len() as u128);
            let it = (s % kt) as usize;
            s /= kt;
            let ia = (s % ka) as usize;
            s /= ka;
            v.push(Comp { theta: l.theta[it].0.clone(), a: l.a[ia].0.clone() });
            p *= l.theta[it].1 * l.a[ia].1;
        }
        (v, p)
    };
    let single: u128 = radix.iter().map(|r| *r as u128).product();
    let full = (1u64 << n) - 1;
    let weights: Vec<f64> = (0..full)
        .map(|m| {
            let k = m.count_ones() as u64;
            1.0 / (binom(n as u64, k) * (n as u64 - k) as f64)
        })
        .collect();

    let zero = Complex64::new(0.0, 0.0);
    let (mut ehf, mut eh, mut ef, mut rhs) = (zero, zero, zero, zero);
    for s1 in 0..single {
        let (x, p1) = decode(s1);
        let hx = h(&x);
        let fx = f(&x);
        ehf += p1 * hx * fx;
        eh += p1 * hx;
        ef += p1 * fx;
        for s2 in 0..single {
            let (xp, p2) = decode(s2);
            let p = p1 * p2;
            if p == 0.0 {
                continue;
            }
            let mut acc = zero;
            for alpha in [Component::Theta, Component::A] {
                for mask in 0..full {
                    let y = swapped(&x, &xp, mask, alpha);
                    let mut inner = zero;
                    for j in (0..n).filter(|j| mask >> j & 1 == 0) {
                        inner += delta(h, &x, &xp, j, alpha) * delta(f, &y, &xp, j, alpha);
                    }
                    acc += weights[mask as usize] * inner;
                }
            }
            rhs += 0.5 * p * acc;
        }
    }
    let lhs = ehf - eh * ef;
    let out = ExactCov { lhs, rhs };
    if (lhs - rhs).norm() > 1e-12 * (1.0 + lhs.norm()) {
        return Err(Error::Verification(format!("covariance identity: lhs {lhs} vs rhs {rhs}")));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovEstimate {
    pub estimate: Complex64,
    pub stderr: f64,
    pub moments: ComplexMoments,
}

const CHUNK: u64 = 256;

/// One draw of the randomized estimator: `(X, X')` from `sampler`, `|A|`
/// uniform on `0..n`, `A` uniform of that size, `j` uniform outside `A`.
pub fn estimator_term<T, U, F, H, S>(f: &F, h: &H, sampler: &S, n: usize, key: &RngKey) -> Complex64
where
    T: Clone,
    U: Clone,
    F: Fn(&[Comp<T, U>]) -> Complex64,
    H: Fn(&[Comp<T, U>]) -> Complex64,
    S: Fn(&RngKey) -> Vec<Comp<T, U>>,
{
    let x = sampler(&key.child(0));
    let xp = sampler(&key.child(1));
    let mut rng = key.child(2).rng();
    let m = rng.random_range(0..n);
    let chosen = sample_indices(&mut rng, n, m);
    let mut mask = 0u64;
    for i in chosen.iter() {
        mask |= 1 << i;
    }
    let rest: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
    let j = rest[rng.random_range(0..rest.len())];
    let mut v = Complex64::new(0.0, 0.0);
    for alpha in [Component::Theta, Component::A] {
        let y = swapped(&x, &xp, mask, alpha);
        v += delta(h, &x, &xp, j, alpha) * delta(f, &y, &xp, j, alpha);
    }
    0.5 * n as f64 * v
}

/// Unbiased Monte Carlo estimate of the swap decomposition.
pub fn cov_estimator<T, U, F, H, S>(f: &F, h: &H, sampler: &S, n: usize, budget: u64, key: &RngKey) -> Result<CovEstimate>
where
    T: Clone,
    U: Clone,
    F: Fn(&[Comp<T, U>]) -> Complex64 + Sync,
    H: Fn(&[Comp<T, U>]) -> Complex64 + Sync,
    S: Fn(&RngKey) -> Vec<Comp<T, U>> + Sync,
{
    if budget == 0 || n == 0 || n > 63 {
        return Err(Error::Config(format!("estimator needs budget >= 1 and 1 <= n <= 63 (n = {n})")));
    }
    let chunks = budget.div_ceil(CHUNK);
    let parts: Vec<ComplexMoments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = ComplexMoments::default();
            for b in c * CHUNK..((c + 1) * CHUNK).min(budget) {
                acc.push(estimator_term(f, h, sampler, n, &key.child(b)));
            }
            acc
        })
        .collect();
    let moments = pairwise(&parts, |a, b| a.merge(b), ComplexMoments::default());
    let stderr = if moments.count() < 2 { 0.0 } else { moments.stderr() };
    Ok(CovEstimate { estimate: moments.mean(), stderr, moments })
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Comp<f64, f64>;

    fn law(t: [f64; 2], a: [f64; 2], p: f64) -> DiscreteLaw<f64, f64> {
        DiscreteLaw { theta: vec![(t[0], p), (t[1], 1.0 - p)], a: vec![(a[0], 0.5), (a[1], 0.5)] }
    }

    #[test]
    fn delta_basics() {
        let x = [C { theta: 0.3, a: 1.0 }, C { theta: 0.1, a: 2.0 }];
        let xp = [C { theta: 0.7, a: 3.0 }, C { theta: 0.9, a: 4.0 }];
        let konst = |_: &[C]| Complex64::new(2.0, 0.0);
        assert_eq!(delta(&konst, &x, &xp, 0, Component::Theta), Complex64::new(0.0, 0.0));
        let a0 = |v: &[C]| Complex64::new(v[0].a, 0.0);
        assert_eq!(delta(&a0, &x, &xp, 0, Component::Theta), Complex64::new(0.0, 0.0));
        let sum = |v: &[C]| Complex64::new(v.iter().map(|c| c.theta).sum(), 0.0);
        let d = delta(&sum, &x, &xp, 0, Component::Theta);
        assert!((d.re - (0.3 - 0.7)).abs() < 1e-15);
    }

    #[test]
    fn single_component_variance() {
        let l = DiscreteLaw { theta: vec![(0.0, 0.5), (1.0, 0.5)], a: vec![(0.0, 1.0)] };
        let id = |v: &[C]| Complex64::new(v[0].theta, 0.0);
        let r = cov_exact_enumeration(&id, &id, &[l], DEFAULT_STATE_BOUND).unwrap();
        assert!((r.lhs.re - 0.25).abs() < 1e-15);
        assert!((r.rhs.re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn independent_parts_vanish() {
        let ls = vec![law([0.0, 1.0], [2.0, 5.0], 0.3); 2];
        let f = |v: &[C]| Complex64::new(v[0].a * v[1].a, 0.0);
        let h = |v: &[C]| Complex64::new(v[0].theta + v[1].theta, 0.0);
        let r = cov_exact_enumeration(&f, &h, &ls, DEFAULT_STATE_BOUND).unwrap();
        assert!(r.lhs.norm() < 1e-14 && r.rhs.norm() < 1e-14);
    }

    #[test]
    fn real_covariance_is_symmetric() {
        let ls = vec![law([-1.0, 1.0], [0.5, 2.0], 0.5); 2];
        let f = |v: &[C]| Complex64::new(v[0].theta * v[1].a + v[1].theta, 0.0);
        let h = |v: &[C]| Complex64::new((v[0].theta + v[1].a).powi(2), 0.0);
        let fh = cov_exact_enumeration(&f, &h, &ls, DEFAULT_STATE_BOUND).unwrap();
        let hf = cov_exact_enumeration(&h, &f, &ls, DEFAULT_STATE_BOUND).unwrap();
        assert!((fh.lhs - hf.lhs).norm() < 1e-14);
        assert!((fh.rhs - hf.rhs).norm() < 1e-12);
    }

    #[test]
    fn bound_is_enforced() {
        let ls = vec![law([0.0, 1.0], [0.0, 1.0], 0.5); 4];
        let f = |_: &[C]| Complex64::new(1.0, 0.0);
        assert!(matches!(cov_exact_enumeration(&f, &f, &ls, 1000), Err(Error::StateSpace { .. })));
    }

    #[test]
    fn constant_estimator_is_zero() {
        let f = |_: &[C]| Complex64::new(3.0, 1.0);
        let s = |_: &RngKey| vec![C { theta: 0.0, a: 0.0 }; 3];
        let e = cov_estimator(&f, &f, &s, 3, 1000, &RngKey::root(1)).unwrap();
        assert_eq!(e.estimate, Complex64::new(0.0, 0.0));
        assert_eq!(e.stderr, 0.0);
    }
}
