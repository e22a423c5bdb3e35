//! Conditional averages of `M` and the six covariance tensors.
//!
//! The outer loop draws `(theta_0, rho_0)`. For each outer draw the
//! conditional average `<M>_(theta0, rho0)` is estimated by two independent
//! inner replicas of resampled environments; the cross-product of the two
//! centered replica means is an unbiased estimate of `C^W`. Environments are
//! keyed by (replica, inner index) only, so every outer draw sees the same
//! environments (common random numbers). The modified corrector never sees
//! the origin inclusion, which lets one solve per environment serve all
//! outer draws.

use nalgebra::{SMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::corrector::{solve_on, CorrectorFields, CorrectorOptions};
use crate::cell::supercell::{Perforation, SupercellMedium};
use crate::error::{Error, Result};
use crate::laws::{ALaw, Nu0};
use crate::medium::InclusionParams;
use crate::mnstats::mtensor::{m_tensor_from, MTensor};
use crate::mnstats::nstats::{n_monte_carlo, n_rho_mean, n_statistics, NMonteCarlo, NQuadrature, NStatistics};
use crate::rng::{tag, RngKey};
use crate::stats::jackknife;

pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceConfig {
    pub nu0: Nu0,
    pub nu1: ALaw,
    pub xi: f64,
    pub k0: f64,
    pub l: usize,
    pub per_cell: usize,
    pub outer: usize,
    pub inner: usize,
    pub corrector: CorrectorOptions,
    pub quadrature: NQuadrature,
    /// Samples for the quadrature-free estimate of `C^theta,*` (0 to skip).
    pub n_mc_samples: usize,
    /// Also run at `L - 2` and report the difference.
    pub l_sensitivity: bool,
    pub max_attempts: usize,
}

impl CovarianceConfig {
    pub fn validate(&self) -> Result<()> {
        self.nu0.validate()?;
        self.nu1.validate()?;
        if self.outer < 2 || self.inner < 1 || self.l < 1 || self.per_cell < 2 {
            return Err(Error::Config(format!(
                "covariances need outer >= 2, inner >= 1, L >= 1; got outer = {}, inner = {}, L = {}",
                self.outer, self.inner, self.l
            )));
        }
        Ok(())
    }
}

/// Second-moment data of the limiting noises.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSet {
    pub c_w: Tensor4,
    pub c_w_stderr: Tensor4,
    pub c_wn: [[Complex64; 3]; 3],
    pub c_wn_stderr: [[f64; 3]; 3],
    pub c_theta: Complex64,
    pub c_theta_stderr: f64,
    pub c_theta_star: f64,
    pub c_theta_star_stderr: f64,
    pub c_a: Complex64,
    pub c_a_stderr: f64,
    pub c_a_star: f64,
    pub c_a_star_stderr: f64,
}

impl CovarianceSet {
    pub fn zero() -> Self {
        let z = Complex64::new(0.0, 0.0);
        CovarianceSet {
            c_w: [[[[0.0; 3]; 3]; 3]; 3],
            c_w_stderr: [[[[0.0; 3]; 3]; 3]; 3],
            c_wn: [[z; 3]; 3],
            c_wn_stderr: [[0.0; 3]; 3],
            c_theta: z,
            c_theta_stderr: 0.0,
            c_theta_star: 0.0,
            c_theta_star_stderr: 0.0,
            c_a: z,
            c_a_stderr: 0.0,
            c_a_star: 0.0,
            c_a_star_stderr: 0.0,
        }
    }

    /// `C^W` as a 9x9 matrix on the pairs `(ij)`, index `3 i + j`.
    pub fn c_w_matrix(&self) -> [[f64; 9]; 9] {
        let mut m = [[0.0; 9]; 9];
        for (p, row) in m.iter_mut().enumerate() {
            for (q, e) in row.iter_mut().enumerate() {
                *e = self.c_w[p / 3][p % 3][q / 3][q % 3];
            }
        }
        m
    }

    pub fn c_w_trace(&self) -> f64 {
        (0..9).map(|p| self.c_w[p / 3][p % 3][p / 3][p % 3]).sum()
    }

    pub fn c_w_min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.c_w_matrix())
    }

    /// Largest `|C^WN_ij| - sqrt(C^W_ijij C^theta,*)`; non-positive when
    /// Cauchy-Schwarz holds.
    pub fn cauchy_schwarz_excess(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                let b = (self.c_w[i][j][i][j].max(0.0) * self.c_theta_star).sqrt();
                worst = worst.max(self.c_wn[i][j].norm() - b);
            }
        }
        worst
    }

    /// Entry-wise `|self - o|`, maximized within each tensor.
    pub fn max_differences(&self, o: &CovarianceSet) -> CovarianceDifference {
        let mut w: f64 = 0.0;
        let mut wn: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                wn = wn.max((self.c_wn[i][j] - o.c_wn[i][j]).norm());
                for k in 0..3 {
                    for l in 0..3 {
                        w = w.max((self.c_w[i][j][k][l] - o.c_w[i][j][k][l]).abs());
                    }
                }
            }
        }
        CovarianceDifference {
            c_w: w,
            c_wn: wn,
            c_theta: (self.c_theta - o.c_theta).norm(),
            c_theta_star: (self.c_theta_star - o.c_theta_star).abs(),
            c_a: (self.c_a - o.c_a).norm(),
            c_a_star: (self.c_a_star - o.c_a_star).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceDifference {
    pub c_w: f64,
    pub c_wn: f64,
    pub c_theta: f64,
    pub c_theta_star: f64,
    pub c_a: f64,
    pub c_a_star: f64,
}

fn min_eigenvalue(m: &[[f64; 9]; 9]) -> f64 {
    let a = SMatrix::<f64, 9, 9>::from_fn(|i, j| m[i][j]);
    SymmetricEigen::new(a).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Symmetrize and clip negative eigenvalues.
fn psd_projection(m: &[[f64; 9]; 9]) -> [[f64; 9]; 9] {
    let a = SMatrix::<f64, 9, 9>::from_fn(|i, j| 0.5 * (m[i][j] + m[j][i]));
    let e = SymmetricEigen::new(a);
    if e.eigenvalues.iter().all(|l| *l >= 0.0) {
        let mut out = [[0.0; 9]; 9];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[(i, j)];
            }
        }
        return out;
    }
    let d = SMatrix::<f64, 9, 9>::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0)));
    let p = e.eigenvectors * d * e.eigenvectors.transpose();
    let mut out = [[0.0; 9]; 9];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = 0.5 * (p[(i, j)] + p[(j, i)]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMean {
    pub m: MTensor,
    /// Entry-wise standard error over the inner samples (NaN for one sample).
    pub stderr: MTensor,
    pub samples: usize,
    pub skipped: usize,
    pub max_gauge_check: f64,
}

/// Cell parameters of one environment: `(theta, rho)` keyed by the offset
/// from the origin cell, so the environment at `L - 2` is the inner part of
/// the one at `L`.
fn environment(l: usize, nu0: &Nu0, xi: f64, max_attempts: usize, a_family: &[Complex64], key: &RngKey) -> Result<Vec<InclusionParams>> {
    let o = (l / 2) as i64;
    let mut cells = Vec::with_capacity(l * l * l);
    for i in 0..l {
        for j in 0..l {
            for k in 0..l {
                let off = [i as i64 - o, j as i64 - o, k as i64 - o];
                let (theta, rho) = nu0.draw(xi, &key.cell(off).child(tag::THETA), max_attempts)?;
                cells.push(InclusionParams { theta, rho, a: a_family[cells.len()] });
            }
        }
    }
    Ok(cells)
}

/// An environment with its modified corrector (origin cell emptied).
struct Env {
    sc: SupercellMedium,
    minus: CorrectorFields,
}

impl Env {
    fn new(l: usize, per_cell: usize, cfg: &CovarianceConfig, a_family: &[Complex64], key: &RngKey) -> Result<Env> {
        let cells = environment(l, &cfg.nu0, cfg.xi, cfg.max_attempts, a_family, key)?;
        let mut sc = SupercellMedium::new(l, per_cell, cells)?;
        let i0 = sc.cell_index(sc.origin_cell());
        sc.cells[i0].rho = 0.0;
        let p = Perforation::of_supercell(&sc, None, cfg.corrector.weight);
        let minus = solve_on(p, None, cfg.corrector.cg)?;
        Ok(Env { sc, minus })
    }

    /// `M` with the origin inclusion set to `(theta0, rho0)`.
    fn m(&self, theta0: [f64; 3], rho0: f64, cfg: &CovarianceConfig) -> Result<(MTensor, f64)> {
        let mut sc = self.sc.clone();
        let i0 = sc.cell_index(sc.origin_cell());
        sc.cells[i0].theta = theta0;
        sc.cells[i0].rho = rho0;
        sc.validate()?;
        let p = Perforation::of_supercell(&sc, None, cfg.corrector.weight);
        let full = solve_on(p, Some(&self.minus.phi), cfg.corrector.cg)?;
        let e = m_tensor_from(&sc, &full, &self.minus)?;
        Ok((e.m, e.gauge_check))
    }
}

/// Solver and geometry failures are skipped and counted; anything else is a
/// configuration problem and propagates.
fn skippable(e: &Error) -> bool {
    matches!(e, Error::NotConverged { .. } | Error::Breakdown { .. } | Error::Geometry(_))
}

fn default_a_family(l: usize, nu1: &ALaw, key: &RngKey) -> Vec<Complex64> {
    let o = (l / 2) as i64;
    let mut out = Vec::with_capacity(l * l * l);
    for i in 0..l {
        for j in 0..l {
            for k in 0..l {
                let off = [i as i64 - o, j as i64 - o, k as i64 - o];
                out.push(nu1.draw(&mut key.cell(off).child(tag::A).rng()));
            }
        }
    }
    out
}

fn entry_stats(vals: &[MTensor]) -> (MTensor, MTensor) {
    let n = vals.len() as f64;
    let mut mean = MTensor::zero();
    let mut se = MTensor::zero();
    for l in 0..3 {
        for k in 0..3 {
            let x0 = vals[0].0[l][k];
            let m = vals.iter().map(|v| v.0[l][k] - x0).sum::<f64>() / n;
            mean.0[l][k] = x0 + m;
            let var = vals.iter().map(|v| (v.0[l][k] - x0 - m).powi(2)).sum::<f64>() / (n - 1.0);
            se.0[l][k] = (var / n).sqrt();
        }
    }
    (mean, se)
}

/// `<M>_(theta0, rho0)` by averaging over `inner` resampled environments.
/// `a_family` holds one coefficient per supercell cell; `M` must not depend
/// on it.
pub fn conditional_mean_m(
    theta0: [f64; 3],
    rho0: f64,
    a_family: &[Complex64],
    cfg: &CovarianceConfig,
    inner: usize,
    key: &RngKey,
) -> Result<ConditionalMean> {
    if inner == 0 {
        return Err(Error::Config("inner_samples must be at least 1".into()));
    }
    if a_family.len() != cfg.l.pow(3) {
        return Err(Error::Config(format!("a-family needs {} entries, got {}", cfg.l.pow(3), a_family.len())));
    }
    let out: Vec<Result<(MTensor, f64)>> = (0..inner)
        .into_par_iter()
        .map(|r| {
            let env = Env::new(cfg.l, cfg.per_cell, cfg, a_family, &key.child(tag::INNER).child(r as u64))?;
            env.m(theta0, rho0, cfg)
        })
        .collect();
    let mut vals = Vec::new();
    let mut skipped = 0;
    let mut gauge: f64 = 0.0;
    for r in out {
        match r {
            Ok((m, g)) => {
                vals.push(m);
                gauge = gauge.max(g);
            }
            Err(e) if skippable(&e) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if vals.is_empty() {
        return Err(Error::Statistics(format!("all {inner} inner samples failed")));
    }
    let (m, stderr) = entry_stats(&vals);
    Ok(ConditionalMean { m, stderr, samples: vals.len(), skipped, max_gauge_check: gauge })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub l: usize,
    pub per_cell: usize,
    pub outer: usize,
    pub inner: usize,
    pub set: CovarianceSet,
    /// Smallest eigenvalue of the symmetrized cross-product estimate of
    /// `C^W` before clipping.
    pub c_w_raw_min_eigenvalue: f64,
    pub mean_m: MTensor,
    pub n_stats: NStatistics,
    pub n_monte_carlo: Option<NMonteCarlo>,
    pub used_outer: usize,
    pub skipped_solves: usize,
    pub skipped_outer: usize,
    pub max_gauge_check: f64,
    pub reduced: Option<ReducedRun>,
}

/// The same estimate at `L - 2` with the same random numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedRun {
    pub l: usize,
    pub set: CovarianceSet,
    pub difference: CovarianceDifference,
}

/// M-statistics from the nested loop at one supercell size.
struct MPart {
    c_w: Tensor4,
    c_w_stderr: Tensor4,
    c_w_raw_min: f64,
    c_wn: [[Complex64; 3]; 3],
    c_wn_stderr: [[f64; 3]; 3],
    mean_m: MTensor,
    used: usize,
    skipped_solves: usize,
    skipped_outer: usize,
    gauge: f64,
}

fn flat(m: &MTensor) -> [f64; 9] {
    let mut f = [0.0; 9];
    for p in 0..9 {
        f[p] = m.0[p / 3][p % 3];
    }
    f
}

/// Per outer draw: the two replica means (flattened) and `nbar(rho_0) - E N`.
#[derive(Clone, Copy)]
struct OuterRow {
    x: [[f64; 9]; 2],
    dn: Complex64,
}

fn cross_covariance(rows: &[OuterRow]) -> [[f64; 9]; 9] {
    let n = rows.len() as f64;
    let shift = rows[0].x;
    let mut mean = [[0.0; 9]; 2];
    for r in rows {
        for k in 0..2 {
            for p in 0..9 {
                mean[k][p] += (r.x[k][p] - shift[k][p]) / n;
            }
        }
    }
    let mut c = [[0.0; 9]; 9];
    for r in rows {
        let d0: Vec<f64> = (0..9).map(|p| r.x[0][p] - shift[0][p] - mean[0][p]).collect();
        let d1: Vec<f64> = (0..9).map(|p| r.x[1][p] - shift[1][p] - mean[1][p]).collect();
        for p in 0..9 {
            for q in 0..9 {
                c[p][q] += 0.5 * (d0[p] * d1[q] + d1[p] * d0[q]) / (n - 1.0);
            }
        }
    }
    c
}

/// `C^WN = E{(<M> - <M>_0)(nbar(rho_0) - E N)}` with `<M>_0` the mean of the
/// two replicas.
fn wn_covariance(rows: &[OuterRow]) -> [Complex64; 9] {
    let n = rows.len() as f64;
    let avg = |r: &OuterRow, p: usize| 0.5 * (r.x[0][p] + r.x[1][p]);
    let mut out = [Complex64::new(0.0, 0.0); 9];
    for (p, o) in out.iter_mut().enumerate() {
        let s = avg(&rows[0], p);
        let m = rows.iter().map(|r| avg(r, p) - s).sum::<f64>() / n;
        *o = -rows.iter().map(|r| (avg(r, p) - s - m) * r.dn).sum::<Complex64>() / (n - 1.0);
    }
    out
}

fn m_part(cfg: &CovarianceConfig, l: usize, e_n: Complex64, key: &RngKey) -> Result<MPart> {
    let a_family = default_a_family(l, &cfg.nu1, &key.child(tag::A));
    let env_keys: Vec<(usize, RngKey)> = (0..2)
        .flat_map(|k| (0..cfg.inner).map(move |r| (k, r)))
        .map(|(k, r)| (k, key.child(tag::REPLICA).child(k as u64).child(tag::INNER).child(r as u64)))
        .collect();
    let envs: Vec<Result<Env>> = env_keys.par_iter().map(|(_, ek)| Env::new(l, cfg.per_cell, cfg, &a_family, ek)).collect();
    let mut skipped_solves = 0;
    let mut live: Vec<(usize, Env)> = Vec::new();
    for ((k, _), e) in env_keys.iter().zip(envs) {
        match e {
            Ok(env) => live.push((*k, env)),
            Err(e) if skippable(&e) => skipped_solves += 1,
            Err(e) => return Err(e),
        }
    }
    let outer: Vec<Result<(Option<OuterRow>, usize, f64)>> = (0..cfg.outer)
        .into_par_iter()
        .map(|o| {
            let (theta0, rho0) = cfg.nu0.draw(cfg.xi, &key.child(tag::OUTER).child(o as u64), cfg.max_attempts)?;
            let mut vals: [Vec<MTensor>; 2] = [vec![], vec![]];
            let mut skipped = 0;
            let mut gauge: f64 = 0.0;
            for (k, env) in &live {
                match env.m(theta0, rho0, cfg) {
                    Ok((m, g)) => {
                        vals[*k].push(m);
                        gauge = gauge.max(g);
                    }
                    Err(e) if skippable(&e) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            if vals.iter().any(|v| v.is_empty()) {
                return Ok((None, skipped, gauge));
            }
            let x = [flat(&entry_stats(&vals[0]).0), flat(&entry_stats(&vals[1]).0)];
            let dn = n_rho_mean(&cfg.nu1, cfg.k0, cfg.quadrature.a_nodes, rho0)? - e_n;
            Ok((Some(OuterRow { x, dn }), skipped, gauge))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped_outer = 0;
    let mut gauge: f64 = 0.0;
    for r in outer {
        let (row, s, g) = r?;
        skipped_solves += s;
        gauge = gauge.max(g);
        match row {
            Some(row) => rows.push(row),
            None => skipped_outer += 1,
        }
    }
    if rows.len() < 2 {
        return Err(Error::Statistics(format!("only {} usable outer samples", rows.len())));
    }
    let raw = cross_covariance(&rows);
    let c_w_raw_min = min_eigenvalue(&raw);
    let proj = psd_projection(&raw);
    let wn = wn_covariance(&rows);
    let mut c_w = [[[[0.0; 3]; 3]; 3]; 3];
    let mut c_w_stderr = [[[[0.0; 3]; 3]; 3]; 3];
    let mut c_wn = [[Complex64::new(0.0, 0.0); 3]; 3];
    let mut c_wn_stderr = [[0.0; 3]; 3];
    for p in 0..9 {
        for q in 0..9 {
            c_w[p / 3][p % 3][q / 3][q % 3] = proj[p][q];
            c_w_stderr[p / 3][p % 3][q / 3][q % 3] = jackknife(&rows, |s| cross_covariance(s)[p][q]);
        }
        c_wn[p / 3][p % 3] = wn[p];
        let re = jackknife(&rows, |s| wn_covariance(s)[p].re);
        let im = jackknife(&rows, |s| wn_covariance(s)[p].im);
        c_wn_stderr[p / 3][p % 3] = re.hypot(im);
    }
    let mut mean_m = MTensor::zero();
    let n = rows.len() as f64;
    for r in &rows {
        for p in 0..9 {
            mean_m.0[p / 3][p % 3] += 0.5 * (r.x[0][p] + r.x[1][p]) / n;
        }
    }
    Ok(MPart {
        c_w,
        c_w_stderr,
        c_w_raw_min,
        c_wn,
        c_wn_stderr,
        mean_m,
        used: rows.len(),
        skipped_solves,
        skipped_outer,
        gauge,
    })
}

fn assemble(m: &MPart, ns: &NStatistics) -> CovarianceSet {
    let q = ns.quadrature_error;
    CovarianceSet {
        c_w: m.c_w,
        c_w_stderr: m.c_w_stderr,
        c_wn: m.c_wn,
        c_wn_stderr: m.c_wn_stderr,
        c_theta: ns.c_theta,
        c_theta_stderr: q,
        c_theta_star: ns.c_theta_star,
        c_theta_star_stderr: q,
        c_a: ns.c_a,
        c_a_stderr: q,
        c_a_star: ns.c_a_star,
        c_a_star_stderr: q,
    }
}

/// Nested Monte Carlo for the M-statistics, quadrature for the N-statistics.
pub fn covariance_set(cfg: &CovarianceConfig, key: &RngKey) -> Result<CovarianceReport> {
    cfg.validate()?;
    let ns = n_statistics(&cfg.nu0, &cfg.nu1, cfg.xi, cfg.k0, cfg.quadrature)?;
    let mp = m_part(cfg, cfg.l, ns.mean, key)?;
    let set = assemble(&mp, &ns);
    let n_mc = if cfg.n_mc_samples >= 2 {
        Some(n_monte_carlo(&cfg.nu0, &cfg.nu1, cfg.xi, cfg.k0, cfg.n_mc_samples, &key.child(tag::SAMPLE), cfg.max_attempts)?)
    } else {
        None
    };
    let reduced = if cfg.l_sensitivity && cfg.l >= 3 {
        let small = m_part(cfg, cfg.l - 2, ns.mean, key)?;
        let s2 = assemble(&small, &ns);
        Some(ReducedRun { l: cfg.l - 2, difference: set.max_differences(&s2), set: s2 })
    } else {
        None
    };
    Ok(CovarianceReport {
        l: cfg.l,
        per_cell: cfg.per_cell,
        outer: cfg.outer,
        inner: cfg.inner,
        c_w_raw_min_eigenvalue: mp.c_w_raw_min,
        set,
        mean_m: mp.mean_m,
        n_stats: ns,
        n_monte_carlo: n_mc,
        used_outer: mp.used,
        skipped_solves: mp.skipped_solves,
        skipped_outer: mp.skipped_outer,
        max_gauge_check: mp.gauge,
        reduced,
    })
}
