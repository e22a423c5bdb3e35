//! Stage computations shared by the command-line pipeline and the long
//! acceptance runs: effective coefficients, heterogeneous ensembles and the
//! limit with its error budget. Nothing here touches the file system.

use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::corrector::{solve_corrector, CorrectorOptions, CorrectorSolution};
use crate::cell::effective::{a_eff_from_fluxes, EffectiveTensor};
use crate::cell::lambda::{mu_eff, MarginalQuadrature, MuEff};
use crate::cell::supercell::SupercellMedium;
use crate::error::{Error, Result};
use crate::helmholtz::{
    fluctuation_functional, pairing, solve_heterogeneous, solve_homogenized, to_complex, two_scale_error, weighted_green,
    FluctuationStats, GaussianBump, GridSpec, HelmholtzSetup, KrylovOptions,
};
use crate::limit::{limit_basis, noise_mask, pairing_by_reciprocity, sample_with_law, LimitMoments, NoiseLaw};
use crate::medium::{sample_medium, sample_window, CellLaw, CellWindow, MediumConfig};
use crate::mnstats::CovarianceSet;
use crate::rng::{tag, RngKey};
use crate::stats::Moments;

/// One solved supercell of the corrector ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorRow {
    pub index: usize,
    pub volume_fraction: f64,
    pub iterations: [usize; 3],
    pub residual: f64,
    /// Relative max-norm divergence per component.
    pub divergence: [f64; 3],
    /// Volume average of `1_fluid (e_i + grad phi_i)`, entry `[d][i]`.
    pub mean_flux: [[f64; 3]; 3],
}

/// Supercell `s` of the ensemble, its solution and its summary row.
pub fn corrector_sample(law: &CellLaw, l: usize, per_cell: usize, s: usize, opts: CorrectorOptions, key: &RngKey) -> Result<(SupercellMedium, CorrectorSolution, CorrectorRow)> {
    let k = key.child(tag::SAMPLE).child(s as u64);
    let w = CellWindow::cube(l as i64);
    let sc = SupercellMedium::from_sample(&sample_window(law, &k, w)?, w, per_cell)?;
    let sol = solve_corrector(&sc, opts)?;
    let f = &sol.full;
    let row = CorrectorRow {
        index: s,
        volume_fraction: sc.volume_fraction(),
        iterations: std::array::from_fn(|i| f.reports[i].iterations),
        residual: f.residual(),
        divergence: std::array::from_fn(|i| f.divergence(i)),
        mean_flux: f.mean_flux(),
    };
    Ok((sc, sol, row))
}

/// Solve `samples` independent `L^3` supercells drawn from the cell law.
pub fn corrector_ensemble(law: &CellLaw, l: usize, per_cell: usize, samples: usize, opts: CorrectorOptions, key: &RngKey) -> Result<Vec<CorrectorRow>> {
    (0..samples).map(|s| Ok(corrector_sample(law, l, per_cell, s, opts, key)?.2)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effective {
    pub a_eff: EffectiveTensor,
    pub mu_eff: MuEff,
    /// The value used downstream (the volume route, which has no truncation).
    pub mu: C,
}

pub fn effective(a_b: f64, rows: &[CorrectorRow], law: &CellLaw, k0: f64, n_modes: usize, nodes: usize) -> Result<Effective> {
    let fluxes: Vec<_> = rows.iter().map(|r| r.mean_flux).collect();
    let a = a_eff_from_fluxes(a_b, &fluxes)?;
    let q = MarginalQuadrature { rho: law.nu0.rho_marginal(law.xi, nodes)?, a: law.nu1.quadrature(nodes) };
    let m = mu_eff(&q, k0, n_modes)?;
    Ok(Effective { a_eff: a, mu_eff: m, mu: m.volume_route })
}

/// Grid for heterogeneous solves at `eta`: the requested spacing, refined
/// to `eta / 8` when that is finer.
pub fn grid_for_eta(spec: GridSpec, eta: f64) -> GridSpec {
    let h = spec.h.min(eta / crate::helmholtz::problems::VOXELS_PER_CELL);
    GridSpec { h, ..spec }
}

/// Empirical moments of `U_eta(g)` at one `eta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    pub eta: f64,
    pub h: f64,
    pub samples: usize,
    pub e_abs2: f64,
    pub e_abs2_stderr: f64,
    pub e_sq: C,
    pub e_sq_stderr: f64,
    /// Raw pairings `(g, u_eta)`.
    pub pairings: Vec<C>,
    /// Mean and stderr of the two-scale error on `B_delta`, when requested.
    pub two_scale: Option<(f64, f64)>,
    pub two_scale_samples: Vec<f64>,
    pub max_iterations: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn mc_point(
    medium: &MediumConfig,
    grid: GridSpec,
    krylov: KrylovOptions,
    f_spec: &GaussianBump,
    g_spec: &GaussianBump,
    samples: usize,
    two_scale: Option<(&Effective, f64)>,
    key: &RngKey,
) -> Result<McPoint> {
    medium.validate()?;
    let spec = grid_for_eta(grid, medium.eta);
    let setup = HelmholtzSetup::new(&medium.domain_b, medium.k0, spec, krylov)?;
    let f = to_complex(&f_spec.sample(&setup.grid));
    let g = g_spec.sample(&setup.grid);
    setup.check_support(&f, "f")?;
    setup.check_support(&g, "g")?;
    let u_h = match two_scale {
        Some((e, _)) => Some(solve_homogenized(&setup, e.a_eff.a_eff, e.mu, &f)?.field),
        None => None,
    };
    let mut pairings = Vec::with_capacity(samples);
    let mut errors = Vec::new();
    let mut max_iterations = 0;
    for s in 0..samples {
        let sample = sample_medium(medium, &key.child(tag::SAMPLE).child(s as u64))?;
        let sol = solve_heterogeneous(&setup, medium, &sample, &f)?;
        max_iterations = max_iterations.max(sol.report.iterations);
        pairings.push(pairing(&g, &sol.field)?);
        if let (Some(u_h), Some((_, delta))) = (&u_h, two_scale) {
            errors.push(two_scale_error(&setup, &sample, &sol.field, u_h, delta)?);
        }
        log::info!("eta = {}: sample {}/{samples}, {} iterations", medium.eta, s + 1, sol.report.iterations);
    }
    let st: FluctuationStats = fluctuation_functional(&pairings, medium.eta)?;
    let ts = if errors.is_empty() {
        None
    } else {
        let mut m = Moments::default();
        errors.iter().for_each(|e| m.push(*e));
        Some((m.mean, if errors.len() > 1 { m.stderr() } else { 0.0 }))
    };
    Ok(McPoint {
        eta: medium.eta,
        h: spec.h,
        samples,
        e_abs2: st.e_abs2,
        e_abs2_stderr: st.e_abs2_stderr,
        e_sq: st.e_sq,
        e_sq_stderr: st.e_sq_stderr,
        pairings,
        two_scale: ts,
        two_scale_samples: errors,
        max_iterations,
    })
}

/// Sampled second moments of `(g, v)` over noise draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRoute {
    pub draws: usize,
    pub e_abs2: f64,
    pub e_abs2_stderr: f64,
    pub e_sq: C,
    pub e_sq_stderr: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRun {
    pub moments: LimitMoments,
    /// Standard error propagated from the covariance estimates.
    pub covariance_stderr: f64,
    /// `|E|U|^2 (L) - E|U|^2 (L - 2)|` when a reduced run exists.
    pub l_sensitivity: Option<f64>,
    pub noise: Option<NoiseRoute>,
    /// Why the noise route was skipped, e.g. a joint law that is not PSD.
    pub noise_skipped: Option<String>,
}

impl LimitRun {
    /// MC and covariance errors in quadrature, plus the L-sensitivity and the
    /// quadrature error.
    pub fn band(&self, mc_stderr: f64) -> f64 {
        mc_stderr.hypot(self.covariance_stderr) + self.l_sensitivity.unwrap_or(0.0) + self.moments.quadrature_error
    }
}

#[allow(clippy::too_many_arguments)]
pub fn limit_run(
    medium: &MediumConfig,
    grid: GridSpec,
    krylov: KrylovOptions,
    eff: &Effective,
    f_spec: &GaussianBump,
    g_spec: &GaussianBump,
    cov: &CovarianceSet,
    reduced: Option<&CovarianceSet>,
    delta: f64,
    noise_draws: usize,
    key: &RngKey,
) -> Result<LimitRun> {
    let setup = HelmholtzSetup::new(&medium.domain_b, medium.k0, grid, krylov)?;
    let f = to_complex(&f_spec.sample(&setup.grid));
    let g = g_spec.sample(&setup.grid);
    setup.check_support(&f, "f")?;
    if (0..setup.grid.len()).any(|v| setup.grid.in_pml(v) && g.data[v] != 0.0) {
        return Err(Error::Config("g reaches the PML; the reciprocity pairing needs it to vanish there".into()));
    }
    let a = eff.a_eff.a_eff;
    let u_h = solve_homogenized(&setup, a, eff.mu, &f)?.field;
    let green = weighted_green(&setup, a, eff.mu, &g)?.field;
    let (fine, coarse, voxels) = limit_basis(&u_h, &green, &setup.grid, &medium.domain_b, delta)?;
    let moments = LimitMoments::from_basis(&fine, &coarse, voxels, setup.grid.h, cov, medium.a_b, medium.k0);
    let covariance_stderr = fine.propagated_stderr(cov, medium.a_b, medium.k0);
    let l_sensitivity = reduced.map(|r| (fine.moments(r, medium.a_b, medium.k0).0 - moments.e_abs2).abs());
    let (noise, noise_skipped) = if noise_draws < 2 {
        (None, None)
    } else {
        match NoiseLaw::new(cov) {
            Err(Error::Statistics(msg)) => {
                log::warn!("noise route skipped: {msg}");
                (None, Some(msg))
            }
            Err(e) => return Err(e),
            Ok(law) => {
                let mask = noise_mask(&setup.grid, &medium.domain_b, delta);
                let z: Vec<C> = (0..noise_draws)
                    .into_par_iter()
                    .map(|s| {
                        let n = sample_with_law(&law, &setup.grid, &mask, &key.child(tag::NOISE).child(s as u64))?;
                        pairing_by_reciprocity(&green, &n, &u_h, medium.a_b, medium.k0)
                    })
                    .collect::<Result<_>>()?;
                let st = fluctuation_functional(&z, 1.0)?;
                let route = NoiseRoute {
                    draws: noise_draws,
                    e_abs2: st.e_abs2,
                    e_abs2_stderr: st.e_abs2_stderr,
                    e_sq: st.e_sq,
                    e_sq_stderr: st.e_sq_stderr,
                    min_eigenvalue: law.min_eigenvalue,
                };
                (Some(route), None)
            }
        }
    };
    Ok(LimitRun { moments, covariance_stderr, l_sensitivity, noise, noise_skipped })
}

/// One row of the final comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub eta: f64,
    pub e_abs2: f64,
    pub e_abs2_stderr: f64,
    pub limit: f64,
    pub band: f64,
    pub distance: f64,
    pub within_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Distance to the limit decreases as eta decreases.
    pub monotone: bool,
    /// The smallest eta lies within its band.
    pub finest_within_band: bool,
    /// Contributions to the band at the smallest eta.
    pub decomposition: BandDecomposition,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BandDecomposition {
    pub mc_stderr: f64,
    pub covariance_stderr: f64,
    pub l_sensitivity: f64,
    pub quadrature_error: f64,
}

pub fn compare(points: &[McPoint], limit: &LimitRun) -> Comparison {
    let mut rows: Vec<CompareRow> = points
        .iter()
        .map(|p| {
            let band = limit.band(p.e_abs2_stderr);
            let distance = (p.e_abs2 - limit.moments.e_abs2).abs();
            CompareRow {
                eta: p.eta,
                e_abs2: p.e_abs2,
                e_abs2_stderr: p.e_abs2_stderr,
                limit: limit.moments.e_abs2,
                band,
                distance,
                within_band: distance <= band,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.eta.total_cmp(&a.eta));
    let monotone = rows.windows(2).all(|w| w[1].distance <= w[0].distance);
    let last = rows.last();
    let decomposition = last
        .map(|r| BandDecomposition {
            mc_stderr: r.e_abs2_stderr,
            covariance_stderr: limit.covariance_stderr,
            l_sensitivity: limit.l_sensitivity.unwrap_or(0.0),
            quadrature_error: limit.moments.quadrature_error,
        })
        .unwrap_or_default();
    Comparison { finest_within_band: last.is_some_and(|r| r.within_band), rows, monotone, decomposition }
}
