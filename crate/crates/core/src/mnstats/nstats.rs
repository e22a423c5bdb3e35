//! Statistics of the volume functional `N`.
//!
//! `N` depends only on `(rho_0, a_0)`, so `<N>_(theta0, rho0) = N(rho_0, a_0)`
//! and `<N> = E{N | a_0}`. Every N-moment is then a finite-dimensional
//! integral over the rho-marginal of `nu_0` and over `nu_1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cell::lambda::n_value;
use crate::error::Result;
use crate::laws::{ALaw, Node, Nu0};
use crate::medium::InclusionParams;
use crate::rng::{tag, RngKey};
use crate::stats::Moments;

/// `N(m_0)`: ignores `theta_0` and every other cell.
pub fn n_scalar(m0: &InclusionParams, k0: f64) -> Result<Complex64> {
    n_value(m0.rho, m0.a, k0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NQuadrature {
    /// Gauss nodes per interval of the rho-marginal.
    pub rho_nodes: usize,
    /// Gauss nodes per axis for a continuous `a` law.
    pub a_nodes: usize,
}

impl Default for NQuadrature {
    fn default() -> Self {
        NQuadrature { rho_nodes: 24, a_nodes: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NStatistics {
    pub mean: Complex64,
    pub c_theta: Complex64,
    pub c_theta_star: f64,
    pub c_a: Complex64,
    pub c_a_star: f64,
    /// Largest change of any entry when the node counts are halved.
    pub quadrature_error: f64,
}

/// Nodes of the rho-marginal and of `nu_1`, and `N` on their product.
struct Table {
    rho: Vec<Node<f64>>,
    a: Vec<Node<Complex64>>,
    /// `n[i][k] = N(rho_i, a_k)`
    n: Vec<Vec<Complex64>>,
}

impl Table {
    fn new(nu0: &Nu0, nu1: &ALaw, xi: f64, k0: f64, q: NQuadrature) -> Result<Self> {
        let rho = nu0.rho_marginal(xi, q.rho_nodes)?;
        let a = nu1.quadrature(q.a_nodes);
        let n = rho
            .iter()
            .map(|r| a.iter().map(|an| n_value(r.x, an.x, k0)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Table { rho, a, n })
    }

    /// `E{N | a_k}` for every a node.
    fn conditional(&self) -> Vec<Complex64> {
        (0..self.a.len())
            .map(|k| self.rho.iter().zip(&self.n).map(|(r, row)| r.w * row[k]).sum())
            .collect()
    }

    fn stats(&self) -> NStatistics {
        let cond = self.conditional();
        let mean: Complex64 = cond.iter().zip(&self.a).map(|(c, a)| a.w * c).sum();
        let mut c_theta = Complex64::new(0.0, 0.0);
        let mut c_theta_star = 0.0;
        for (r, row) in self.rho.iter().zip(&self.n) {
            for ((v, a), c) in row.iter().zip(&self.a).zip(&cond) {
                let d = v - c;
                c_theta += r.w * a.w * d * d;
                c_theta_star += r.w * a.w * d.norm_sqr();
            }
        }
        let mut c_a = Complex64::new(0.0, 0.0);
        let mut c_a_star = 0.0;
        for (c, a) in cond.iter().zip(&self.a) {
            let d = c - mean;
            c_a += a.w * d * d;
            c_a_star += a.w * d.norm_sqr();
        }
        NStatistics { mean, c_theta, c_theta_star, c_a, c_a_star, quadrature_error: 0.0 }
    }
}

/// All N-moments by quadrature.
pub fn n_statistics(nu0: &Nu0, nu1: &ALaw, xi: f64, k0: f64, q: NQuadrature) -> Result<NStatistics> {
    let mut full = Table::new(nu0, nu1, xi, k0, q)?.stats();
    let half = NQuadrature { rho_nodes: (q.rho_nodes / 2).max(1), a_nodes: (q.a_nodes / 2).max(1) };
    let coarse = Table::new(nu0, nu1, xi, k0, half)?.stats();
    full.quadrature_error = [
        (full.mean - coarse.mean).norm(),
        (full.c_theta - coarse.c_theta).norm(),
        (full.c_theta_star - coarse.c_theta_star).abs(),
        (full.c_a - coarse.c_a).norm(),
        (full.c_a_star - coarse.c_a_star).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(full)
}

/// `rho -> int N(rho, a) d nu_1(a)`, the a-average entering the W-N
/// cross-covariance.
pub fn n_rho_mean(nu1: &ALaw, k0: f64, a_nodes: usize, rho: f64) -> Result<Complex64> {
    nu1.quadrature(a_nodes).iter().map(|a| Ok(a.w * n_value(rho, a.x, k0)?)).sum()
}

/// Monte Carlo estimates of `C^theta` and `C^theta,*` that use no quadrature:
/// with `rho, rho'` independent and a shared `a`,
/// `E{(N(rho, a) - N(rho', a))^2} / 2 = C^theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NMonteCarlo {
    pub samples: usize,
    pub c_theta: Complex64,
    pub c_theta_stderr: f64,
    pub c_theta_star: f64,
    pub c_theta_star_stderr: f64,
}

pub fn n_monte_carlo(nu0: &Nu0, nu1: &ALaw, xi: f64, k0: f64, samples: usize, key: &RngKey, max_attempts: usize) -> Result<NMonteCarlo> {
    let mut re = Moments::default();
    let mut im = Moments::default();
    let mut star = Moments::default();
    for s in 0..samples {
        let k = key.child(tag::SAMPLE).child(s as u64);
        let (_, r1) = nu0.draw(xi, &k.child(tag::THETA), max_attempts)?;
        let (_, r2) = nu0.draw(xi, &k.child(tag::THETA_STAR), max_attempts)?;
        let a = nu1.draw(&mut k.child(tag::A).rng());
        let d = n_value(r1, a, k0)? - n_value(r2, a, k0)?;
        let d2 = d * d * 0.5;
        re.push(d2.re);
        im.push(d2.im);
        star.push(0.5 * d.norm_sqr());
    }
    Ok(NMonteCarlo {
        samples,
        c_theta: Complex64::new(re.mean, im.mean),
        c_theta_stderr: re.stderr().hypot(im.stderr()),
        c_theta_star: star.mean,
        c_theta_star_stderr: star.stderr(),
    })
}
