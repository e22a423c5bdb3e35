//! Gauss-Legendre rules and sphere quadrature.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = ((i as f64 + 0.75) / (n as f64 + 0.5) * PI).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(w.iter())
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}

/// Composite Gauss-Legendre over consecutive breakpoints.
pub fn composite_gauss(breaks: &[f64], n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for win in breaks.windows(2) {
        if win[1] > win[0] {
            out.extend(gauss_legendre_on(n, win[0], win[1]));
        }
    }
    out
}

/// Product rule on the unit sphere: Gauss-Legendre in cos(polar) times a
/// uniform azimuthal rule. Returns (unit normal, weight); weights sum to 4 pi.
pub fn sphere_rule(n_polar: usize, n_azimuth: usize) -> Vec<([f64; 3], f64)> {
    let (x, w) = gauss_legendre(n_polar);
    let dphi = 2.0 * PI / n_azimuth as f64;
    let mut out = Vec::with_capacity(n_polar * n_azimuth);
    for (&ct, &wt) in x.iter().zip(w.iter()) {
        let st = (1.0 - ct * ct).sqrt();
        for k in 0..n_azimuth {
            let phi = (k as f64 + 0.5) * dphi;
            out.push(([st * phi.cos(), st * phi.sin(), ct], wt * dphi));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..12 {
            let rule = gauss_legendre_on(n, -0.3, 1.7);
            for deg in 0..(2 * n) {
                let q: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = (1.7f64.powi(deg as i32 + 1) - (-0.3f64).powi(deg as i32 + 1))
                    / (deg as f64 + 1.0);
                assert!((q - exact).abs() < 1e-12 * (1.0 + exact.abs()), "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn sphere_rule_moments() {
        let rule = sphere_rule(8, 16);
        let s: f64 = rule.iter().map(|r| r.1).sum();
        assert!((s - 4.0 * PI).abs() < 1e-12);
        // integral of n_i n_j = 4 pi / 3 delta_ij
        for i in 0..3 {
            for j in 0..3 {
                let q: f64 = rule.iter().map(|(n, w)| w * n[i] * n[j]).sum();
                let e = if i == j { 4.0 * PI / 3.0 } else { 0.0 };
                assert!((q - e).abs() < 1e-12);
            }
        }
    }
}
