//! Stages of the run: sample-medium, correctors, effective, covariances,
//! mc-variance, limit, compare. Each stage reads its inputs from the output
//! directory, checks they were produced by the same config, and writes its
//! own artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use wavefluct::experiment::{self, Comparison, CorrectorRow, Effective, LimitRun, McPoint};
use wavefluct::medium::{sample_medium, CellLaw, MediumSnapshot};
use wavefluct::mnstats::{covariance_set, CovarianceReport, CovarianceSet};
use wavefluct::rng::{tag, RngKey};

use crate::config::Loaded;
use crate::error::{CliError, CliResult};
use crate::output::{num, read_json, write_csv, write_json, write_raw, Stamp};

/// Root keys of the independent random streams of a run.
const CORRECTOR_STREAM: u64 = 1;
const COVARIANCE_STREAM: u64 = 2;
const LIMIT_STREAM: u64 = 3;

pub struct Ctx {
    pub loaded: Loaded,
    pub stamp: Stamp,
}

impl Ctx {
    pub fn new(loaded: Loaded) -> Self {
        let stamp = Stamp::new(&loaded.hash, loaded.config.medium.seed);
        Ctx { loaded, stamp }
    }

    pub fn dir(&self) -> &Path {
        &self.loaded.config.output_dir
    }

    fn root(&self) -> RngKey {
        RngKey::root(self.loaded.config.medium.seed)
    }

    fn read<T: serde::de::DeserializeOwned>(&self, name: &str, stage: &str) -> CliResult<T> {
        read_json(&self.dir().join(name), stage, Some(&self.loaded.hash))
    }
}

/// `sample-medium`: the realization that `mc-variance` uses as sample
/// `index` at `eta`.
pub fn sample_medium_stage(ctx: &Ctx, eta: Option<f64>, index: usize, dump: Option<&Path>) -> CliResult<MediumSnapshot> {
    let cfg = &ctx.loaded.config;
    let m = cfg.medium_at(eta.unwrap_or(cfg.medium.eta));
    let sample = sample_medium(&m, &ctx.root().child(tag::SAMPLE).child(index as u64))?;
    let snap = sample.snapshot();
    write_json(ctx.dir(), "medium.json", "medium", &ctx.stamp, &snap)?;
    let rows: Vec<Vec<String>> = snap
        .cells
        .iter()
        .map(|c| {
            let mut r: Vec<String> = c.j.iter().map(|x| x.to_string()).collect();
            r.extend(c.theta.iter().map(|x| num(*x)));
            r.extend([num(c.rho), num(c.a[0]), num(c.a[1])]);
            r
        })
        .collect();
    let header = ["j0", "j1", "j2", "theta0", "theta1", "theta2", "rho", "a_re", "a_im"];
    write_csv(ctx.dir(), "medium.csv", &ctx.stamp, &header, &rows)?;
    if let Some(p) = dump {
        let bytes = serde_json::to_vec_pretty(&snap)?;
        crate::output::write_bytes(p, &bytes)?;
    }
    Ok(snap)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectorStage {
    pub l: usize,
    pub per_cell: usize,
    pub rows: Vec<CorrectorRow>,
}

/// `correctors`: the ensemble for `A_eff`, optionally with raw fields.
pub fn correctors_stage(ctx: &Ctx, l: Option<usize>, per_cell: Option<usize>, samples: Option<usize>, export: bool) -> CliResult<CorrectorStage> {
    let cfg = &ctx.loaded.config;
    let l = l.unwrap_or(cfg.supercell.l);
    let per_cell = per_cell.unwrap_or(cfg.supercell.per_cell);
    let samples = samples.unwrap_or(cfg.supercell.samples);
    let law = CellLaw::from_config(&cfg.medium_at(cfg.medium.eta));
    let key = ctx.root().child(CORRECTOR_STREAM);
    let mut rows = Vec::with_capacity(samples);
    for s in 0..samples {
        let (sc, sol, row) = experiment::corrector_sample(&law, l, per_cell, s, cfg.corrector(), &key)?;
        log::info!("corrector sample {}/{samples}: volume fraction {:.4}, residual {:.2e}", s + 1, row.volume_fraction, row.residual);
        if export {
            let p = &sol.full.phi;
            write_raw(
                &ctx.dir().join("fields"),
                &format!("corrector_{s}"),
                "field",
                &ctx.stamp,
                sc.dims().0,
                sc.h(),
                &[("phi_0", &p[0][..]), ("phi_1", &p[1][..]), ("phi_2", &p[2][..])],
            )?;
        }
        rows.push(row);
    }
    let out = CorrectorStage { l, per_cell, rows };
    write_json(ctx.dir(), "correctors.json", "correctors", &ctx.stamp, &out)?;
    let csv: Vec<Vec<String>> = out
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.index.to_string(), num(r.volume_fraction), num(r.residual)];
            v.extend(r.divergence.iter().map(|x| num(*x)));
            v.extend(r.iterations.iter().map(|x| x.to_string()));
            v.extend((0..9).map(|k| num(r.mean_flux[k / 3][k % 3])));
            v
        })
        .collect();
    let mut header = vec!["sample", "volume_fraction", "residual", "div0", "div1", "div2", "iter0", "iter1", "iter2"];
    let flux: Vec<String> = (0..9).map(|k| format!("flux{}{}", k / 3, k % 3)).collect();
    header.extend(flux.iter().map(|s| s.as_str()));
    write_csv(ctx.dir(), "correctors.csv", &ctx.stamp, &header, &csv)?;
    Ok(out)
}

/// `effective`: `A_eff` from the corrector ensemble and `mu_eff` by both routes.
pub fn effective_stage(ctx: &Ctx) -> CliResult<Effective> {
    let cfg = &ctx.loaded.config;
    let corr: CorrectorStage = ctx.read("correctors.json", "correctors")?;
    let law = CellLaw::from_config(&cfg.medium_at(cfg.medium.eta));
    let eff = experiment::effective(cfg.medium.a_b, &corr.rows, &law, cfg.medium.k0, cfg.budgets.n_modes, cfg.budgets.quadrature_nodes)?;
    write_json(ctx.dir(), "effective.json", "effective", &ctx.stamp, &eff)?;
    Ok(eff)
}

/// `covariances`: nested Monte Carlo for the covariance set.
pub fn covariances_stage(ctx: &Ctx) -> CliResult<CovarianceReport> {
    let cfg = &ctx.loaded.config;
    let report = covariance_set(&cfg.covariance(), &ctx.root().child(COVARIANCE_STREAM))?;
    write_json(ctx.dir(), "covariances.json", "covariances", &ctx.stamp, &report)?;
    Ok(report)
}

/// `mc-variance`: heterogeneous ensembles along the sweep.
pub fn mc_variance_stage(ctx: &Ctx, only: Option<&[f64]>) -> CliResult<Vec<McPoint>> {
    let cfg = &ctx.loaded.config;
    let etas: Vec<f64> = match only {
        Some(e) => e.to_vec(),
        None => cfg.eta_sweep.clone(),
    };
    let two_scale = match ctx.read::<Effective>("effective.json", "effective") {
        Ok(e) => Some(e),
        Err(CliError::Stage(_)) => None,
        Err(e) => return Err(e),
    };
    let mut points = vec![];
    for &eta in &etas {
        let p = experiment::mc_point(
            &cfg.medium_at(eta),
            cfg.grid(),
            cfg.krylov(),
            &cfg.f_spec,
            &cfg.g_spec,
            cfg.budgets.mc_samples,
            two_scale.as_ref().map(|e| (e, cfg.delta())),
            &ctx.root(),
        )?;
        points.push(p);
    }
    write_json(ctx.dir(), "mc_variance.json", "mc_variance", &ctx.stamp, &points)?;
    let summary: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let (ts, ts_se) = p.two_scale.map(|(a, b)| (num(a), num(b))).unwrap_or_default();
            vec![num(p.eta), num(p.h), p.samples.to_string(), num(p.e_abs2), num(p.e_abs2_stderr), num(p.e_sq.re), num(p.e_sq.im), num(p.e_sq_stderr), ts, ts_se]
        })
        .collect();
    let header = ["eta", "h", "samples", "e_abs2", "e_abs2_stderr", "e_sq_re", "e_sq_im", "e_sq_stderr", "two_scale", "two_scale_stderr"];
    write_csv(ctx.dir(), "mc_variance.csv", &ctx.stamp, &header, &summary)?;
    let raw: Vec<Vec<String>> = points
        .iter()
        .flat_map(|p| p.pairings.iter().enumerate().map(move |(s, z)| vec![num(p.eta), s.to_string(), num(z.re), num(z.im)]))
        .collect();
    write_csv(ctx.dir(), "pairings.csv", &ctx.stamp, &["eta", "sample", "re", "im"], &raw)?;
    Ok(points)
}

/// `limit`: quadrature of the limit, its error budget, and the sampled
/// noise route when `noise_draws > 0`.
pub fn limit_stage(ctx: &Ctx, cov_path: Option<&Path>) -> CliResult<LimitRun> {
    let cfg = &ctx.loaded.config;
    let eff: Effective = ctx.read("effective.json", "effective")?;
    let (set, reduced): (CovarianceSet, Option<CovarianceSet>) = match cov_path {
        // an explicit file may come from another config, e.g. a longer run
        Some(p) => {
            let r: CovarianceReport = read_json(p, "covariances", None)?;
            (r.set, r.reduced.map(|x| x.set))
        }
        None => {
            let r: CovarianceReport = ctx.read("covariances.json", "covariances")?;
            (r.set, r.reduced.map(|x| x.set))
        }
    };
    let m = cfg.medium_at(cfg.eta_sweep.iter().cloned().fold(f64::INFINITY, f64::min));
    let run = experiment::limit_run(
        &m,
        experiment::grid_for_eta(cfg.grid(), m.eta),
        cfg.krylov(),
        &eff,
        &cfg.f_spec,
        &cfg.g_spec,
        &set,
        reduced.as_ref(),
        cfg.delta(),
        cfg.budgets.noise_draws,
        &ctx.root().child(LIMIT_STREAM),
    )?;
    write_json(ctx.dir(), "limit.json", "limit", &ctx.stamp, &run)?;
    Ok(run)
}

/// `compare`: empirical moments along the sweep against the limit.
pub fn compare_stage(ctx: &Ctx) -> CliResult<Comparison> {
    let points: Vec<McPoint> = ctx.read("mc_variance.json", "mc_variance")?;
    let limit: LimitRun = ctx.read("limit.json", "limit")?;
    let cmp = experiment::compare(&points, &limit);
    write_json(ctx.dir(), "report.json", "report", &ctx.stamp, &Report { comparison: &cmp, limit: &limit })?;
    let rows: Vec<Vec<String>> = cmp
        .rows
        .iter()
        .map(|r| vec![num(r.eta), num(r.e_abs2), num(r.e_abs2_stderr), num(r.limit), num(r.band), num(r.distance), r.within_band.to_string()])
        .collect();
    write_csv(ctx.dir(), "compare.csv", &ctx.stamp, &["eta", "e_abs2", "e_abs2_stderr", "limit", "band", "distance", "within_band"], &rows)?;
    Ok(cmp)
}

#[derive(Serialize)]
struct Report<'a> {
    comparison: &'a Comparison,
    limit: &'a LimitRun,
}

/// Every stage in order.
pub fn run_pipeline(ctx: &Ctx) -> CliResult<Comparison> {
    sample_medium_stage(ctx, None, 0, None)?;
    correctors_stage(ctx, None, None, None, false)?;
    effective_stage(ctx)?;
    covariances_stage(ctx)?;
    mc_variance_stage(ctx, None)?;
    limit_stage(ctx, None)?;
    compare_stage(ctx)
}
