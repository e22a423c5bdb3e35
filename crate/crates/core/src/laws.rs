//! Distributions of the inclusion parameters.
//!
//! `Nu0` is the joint law of (theta, rho): a product of a theta law and a
//! rho law, conditioned on the admissible set `dist(theta, dZ) > rho + xi`.
//! `ALaw` is the law of the complex coefficient `a` inside an inclusion.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::composite_gauss;
use crate::rng::RngKey;

pub const DEFAULT_MAX_ATTEMPTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaLaw {
    /// Uniform on the unit cube.
    Uniform,
    Point { theta: [f64; 3] },
    /// Uniform on an axis-aligned sub-box of the unit cube.
    Box { lo: [f64; 3], hi: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoLaw {
    Point { rho: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `values[0]` with probability `p`, `values[1]` otherwise.
    TwoPoint { values: [f64; 2], p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ALaw {
    Point { a: Complex64 },
    /// Uniform on the rectangle `re x im`.
    Rect { re: [f64; 2], im: [f64; 2] },
    TwoPoint { values: [Complex64; 2], p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nu0 {
    pub theta: ThetaLaw,
    pub rho: RhoLaw,
}

/// One quadrature node of a scalar law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node<T> {
    pub x: T,
    pub w: f64,
}

impl ThetaLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ThetaLaw::Uniform => Ok(()),
            ThetaLaw::Point { theta } => {
                if theta.iter().all(|t| *t > 0.0 && *t < 1.0) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("theta {theta:?} outside the unit cube")))
                }
            }
            ThetaLaw::Box { lo, hi } => {
                for k in 0..3 {
                    if !(0.0 <= lo[k] && lo[k] < hi[k] && hi[k] <= 1.0) {
                        return Err(Error::Config(format!("bad theta box {lo:?} {hi:?}")));
                    }
                }
                Ok(())
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        match self {
            ThetaLaw::Uniform => [rng.random(), rng.random(), rng.random()],
            ThetaLaw::Point { theta } => *theta,
            ThetaLaw::Box { lo, hi } => {
                let mut t = [0.0; 3];
                for k in 0..3 {
                    t[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
                }
                t
            }
        }
    }

    /// Probability that a draw satisfies `dist(theta, dZ) > s`.
    pub fn acceptance(&self, s: f64) -> f64 {
        match self {
            ThetaLaw::Uniform => (1.0 - 2.0 * s).max(0.0).powi(3),
            ThetaLaw::Point { theta } => {
                if theta.iter().all(|t| *t > s && *t < 1.0 - s) {
                    1.0
                } else {
                    0.0
                }
            }
            ThetaLaw::Box { lo, hi } => (0..3)
                .map(|k| {
                    let len = hi[k].min(1.0 - s) - lo[k].max(s);
                    len.max(0.0) / (hi[k] - lo[k])
                })
                .product(),
        }
    }

    /// Values of `s` where `acceptance` changes polynomial form.
    fn acceptance_breaks(&self) -> Vec<f64> {
        match self {
            ThetaLaw::Uniform => vec![0.5],
            ThetaLaw::Point { .. } => vec![],
            ThetaLaw::Box { lo, hi } => {
                let mut b = vec![0.5];
                for k in 0..3 {
                    b.extend([lo[k], hi[k], 1.0 - lo[k], 1.0 - hi[k]]);
                }
                b
            }
        }
    }
}

impl RhoLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| (0.0..=0.5).contains(&r);
        let good = match self {
            RhoLaw::Point { rho } => ok(*rho),
            RhoLaw::Uniform { lo, hi } => ok(*lo) && ok(*hi) && lo < hi,
            RhoLaw::TwoPoint { values, p } => ok(values[0]) && ok(values[1]) && (0.0..=1.0).contains(p),
        };
        if good {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid rho law {self:?}")))
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            RhoLaw::Point { rho } => *rho,
            RhoLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            RhoLaw::TwoPoint { values, p } => {
                if rng.random::<f64>() < *p {
                    values[0]
                } else {
                    values[1]
                }
            }
        }
    }
}

impl ALaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |a: &Complex64| !(a.im > 0.0 && a.re.is_finite());
        match self {
            ALaw::Point { a } if bad(a) => Err(Error::Config(format!("a = {a} needs Im a > 0"))),
            ALaw::Rect { re, im } if !(re[0] <= re[1] && 0.0 < im[0] && im[0] <= im[1]) => {
                Err(Error::Config(format!("bad a rectangle {re:?} x {im:?}")))
            }
            ALaw::TwoPoint { values, p } if values.iter().any(bad) || !(0.0..=1.0).contains(p) => {
                Err(Error::Config(format!("bad two-point a law {values:?}")))
            }
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Complex64 {
        match self {
            ALaw::Point { a } => *a,
            ALaw::Rect { re, im } => Complex64::new(
                re[0] + (re[1] - re[0]) * rng.random::<f64>(),
                im[0] + (im[1] - im[0]) * rng.random::<f64>(),
            ),
            ALaw::TwoPoint { values, p } => {
                if rng.random::<f64>() < *p {
                    values[0]
                } else {
                    values[1]
                }
            }
        }
    }

    /// Largest |a| on the support.
    pub fn support_radius(&self) -> f64 {
        match self {
            ALaw::Point { a } => a.norm(),
            ALaw::Rect { re, im } => {
                let r = re[0].abs().max(re[1].abs());
                (r * r + im[1] * im[1]).sqrt()
            }
            ALaw::TwoPoint { values, .. } => values[0].norm().max(values[1].norm()),
        }
    }

    /// Quadrature for expectations over `a`; `n` nodes per axis for the
    /// continuous case.
    pub fn quadrature(&self, n: usize) -> Vec<Node<Complex64>> {
        match self {
            ALaw::Point { a } => vec![Node { x: *a, w: 1.0 }],
            ALaw::TwoPoint { values, p } => vec![
                Node { x: values[0], w: *p },
                Node { x: values[1], w: 1.0 - p },
            ],
            ALaw::Rect { re, im } => {
                let rx = if re[1] > re[0] {
                    composite_gauss(&[re[0], re[1]], n)
                        .into_iter()
                        .map(|(x, w)| (x, w / (re[1] - re[0])))
                        .collect()
                } else {
                    vec![(re[0], 1.0)]
                };
                let ry = if im[1] > im[0] {
                    composite_gauss(&[im[0], im[1]], n)
                        .into_iter()
                        .map(|(x, w)| (x, w / (im[1] - im[0])))
                        .collect()
                } else {
                    vec![(im[0], 1.0)]
                };
                let mut out = Vec::with_capacity(rx.len() * ry.len());
                for &(x, wx) in &rx {
                    for &(y, wy) in &ry {
                        out.push(Node { x: Complex64::new(x, y), w: wx * wy });
                    }
                }
                out
            }
        }
    }
}

impl Nu0 {
    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        self.rho.validate()
    }

    /// Draw (theta, rho) conditioned on the admissible set by rejection.
    pub fn draw(&self, xi: f64, key: &RngKey, max_attempts: usize) -> Result<([f64; 3], f64)> {
        let mut rng = key.rng();
        for _ in 0..max_attempts {
            let theta = self.theta.draw(&mut rng);
            let rho = self.rho.draw(&mut rng);
            if admissible(theta, rho, xi) {
                return Ok((theta, rho));
            }
        }
        Err(Error::Infeasible {
            attempts: max_attempts,
            reason: format!("no admissible (theta, rho) for {self:?} with xi = {xi}"),
        })
    }

    /// Quadrature for the rho-marginal of the conditioned law. Exact (up to
    /// rounding) for polynomial integrands of degree < 2n - 3 in rho.
    pub fn rho_marginal(&self, xi: f64, n: usize) -> Result<Vec<Node<f64>>> {
        let acc = |r: f64| self.theta.acceptance(r + xi);
        let mut nodes: Vec<Node<f64>> = match &self.rho {
            RhoLaw::Point { rho } => vec![Node { x: *rho, w: acc(*rho) }],
            RhoLaw::TwoPoint { values, p } => vec![
                Node { x: values[0], w: p * acc(values[0]) },
                Node { x: values[1], w: (1.0 - p) * acc(values[1]) },
            ],
            RhoLaw::Uniform { lo, hi } => {
                let mut breaks = vec![*lo, *hi];
                for b in self.theta.acceptance_breaks() {
                    let r = b - xi;
                    if r > *lo && r < *hi {
                        breaks.push(r);
                    }
                }
                breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
                composite_gauss(&breaks, n)
                    .into_iter()
                    .map(|(x, w)| Node { x, w: w / (hi - lo) * acc(x) })
                    .collect()
            }
        };
        nodes.retain(|n| n.w > 0.0);
        let total: f64 = nodes.iter().map(|n| n.w).sum();
        if total <= 0.0 {
            return Err(Error::Infeasible {
                attempts: 0,
                reason: format!("admissible set has zero probability under {self:?}, xi = {xi}"),
            });
        }
        for n in &mut nodes {
            n.w /= total;
        }
        Ok(nodes)
    }
}

/// Admissibility: `dist(theta, dZ) > rho + xi`.
pub fn admissible(theta: [f64; 3], rho: f64, xi: f64) -> bool {
    let s = rho + xi;
    theta.iter().all(|t| *t > s && *t < 1.0 - s)
}
