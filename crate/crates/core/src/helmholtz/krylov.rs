//! Krylov solvers for the complex Helmholtz systems, Jacobi preconditioned.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helmholtz::operator::HelmholtzOperator;
use crate::stats::ordered_sum;

type C = Complex64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    BiCgStab,
    /// GMRES restarted every `restart` iterations.
    Gmres { restart: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovOptions {
    /// Stop at `|b - Ax|_2 <= tol |b|_2`.
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub method: Method,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-8, max_iter: 20_000, method: Method::BiCgStab }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovReport {
    pub iterations: usize,
    pub residual: f64,
    /// Relative residual after every iteration.
    pub history: Vec<f64>,
}

fn cdot(a: &[C], b: &[C]) -> C {
    ordered_sum(a.len(), |i| a[i].conj() * b[i])
}

fn norm(a: &[C]) -> f64 {
    ordered_sum(a.len(), |i| a[i].norm_sqr()).sqrt()
}

const FALLBACK_RESTART: usize = 50;

/// Solve `op x = b` starting from `x`. A BiCGStab breakdown hands the current
/// iterate and the remaining budget to GMRES.
pub fn solve(op: &HelmholtzOperator, b: &[C], x: &mut [C], opts: KrylovOptions) -> Result<KrylovReport> {
    match opts.method {
        Method::BiCgStab => match bicgstab(op, b, x, opts) {
            Err(Error::Breakdown { iteration, .. }) if iteration < opts.max_iter && x.iter().all(|v| v.is_finite()) => {
                log::warn!("bicgstab broke down at iteration {iteration}, continuing with gmres");
                let rest = KrylovOptions { max_iter: opts.max_iter - iteration, ..opts };
                let mut report = gmres(op, b, x, FALLBACK_RESTART, rest)?;
                report.iterations += iteration;
                Ok(report)
            }
            r => r,
        },
        Method::Gmres { restart } => gmres(op, b, x, restart.max(1), opts),
    }
}

fn inverse_diagonal(op: &HelmholtzOperator) -> Vec<C> {
    op.diagonal().iter().map(|d| if d.norm() > 0.0 { 1.0 / d } else { C::new(1.0, 0.0) }).collect()
}

const BREAKDOWN: f64 = 1e-12;
const MAX_RESTARTS: usize = 50;

fn bicgstab(op: &HelmholtzOperator, b: &[C], x: &mut [C], opts: KrylovOptions) -> Result<KrylovReport> {
    const NAME: &str = "bicgstab";
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
        return Ok(KrylovReport { iterations: 0, residual: 0.0, history: vec![] });
    }
    let inv = inverse_diagonal(op);
    let mut r = vec![C::new(0.0, 0.0); n];
    op.apply(x, &mut r);
    r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut r0 = r.clone();
    let mut restarts = 0;
    let (mut rho, mut alpha, mut omega) = (C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(1.0, 0.0));
    let mut p = vec![C::new(0.0, 0.0); n];
    let mut v = vec![C::new(0.0, 0.0); n];
    let mut y = vec![C::new(0.0, 0.0); n];
    let mut s = vec![C::new(0.0, 0.0); n];
    let mut t = vec![C::new(0.0, 0.0); n];
    let mut history = Vec::new();
    let mut rel = norm(&r) / bnorm;
    for it in 0..opts.max_iter {
        if rel <= opts.tol {
            return Ok(KrylovReport { iterations: it, residual: rel, history });
        }
        let mut rho_new = cdot(&r0, &r);
        if rho_new.norm() < BREAKDOWN * norm(&r0) * norm(&r) || omega.norm() < 1e-300 {
            // restart with the current residual as shadow vector
            restarts += 1;
            if restarts > MAX_RESTARTS {
                return Err(Error::Breakdown { solver: NAME, iteration: it });
            }
            r0.copy_from_slice(&r);
            p.iter_mut().for_each(|z| *z = C::new(0.0, 0.0));
            v.iter_mut().for_each(|z| *z = C::new(0.0, 0.0));
            rho = C::new(1.0, 0.0);
            alpha = C::new(1.0, 0.0);
            omega = C::new(1.0, 0.0);
            rho_new = cdot(&r0, &r);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(pi, (ri, vi))| *pi = ri + beta * (*pi - omega * vi));
        y.par_iter_mut().zip(p.par_iter().zip(inv.par_iter())).for_each(|(yi, (pi, di))| *yi = pi * di);
        op.apply(&y, &mut v);
        let r0v = cdot(&r0, &v);
        if r0v.norm() < 1e-300 || !r0v.is_finite() {
            return Err(Error::Breakdown { solver: NAME, iteration: it });
        }
        alpha = rho / r0v;
        s.par_iter_mut().zip(r.par_iter().zip(v.par_iter())).for_each(|(si, (ri, vi))| *si = ri - alpha * vi);
        if norm(&s) / bnorm <= opts.tol {
            x.par_iter_mut().zip(y.par_iter()).for_each(|(xi, yi)| *xi += alpha * yi);
            op.apply(x, &mut r);
            r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
            rel = norm(&r) / bnorm;
            history.push(rel);
            if rel <= opts.tol {
                return Ok(KrylovReport { iterations: it + 1, residual: rel, history });
            }
            continue;
        }
        // z = M^{-1} s reuses the y buffer after x is updated
        x.par_iter_mut().zip(y.par_iter()).for_each(|(xi, yi)| *xi += alpha * yi);
        y.par_iter_mut().zip(s.par_iter().zip(inv.par_iter())).for_each(|(zi, (si, di))| *zi = si * di);
        op.apply(&y, &mut t);
        let tt = ordered_sum(t.len(), |i| t[i].norm_sqr());
        if tt == 0.0 {
            return Err(Error::Breakdown { solver: NAME, iteration: it });
        }
        omega = cdot(&t, &s) / tt;
        x.par_iter_mut().zip(y.par_iter()).for_each(|(xi, zi)| *xi += omega * zi);
        r.par_iter_mut().zip(s.par_iter().zip(t.par_iter())).for_each(|(ri, (si, ti))| *ri = si - omega * ti);
        rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::Breakdown { solver: NAME, iteration: it });
        }
        history.push(rel);
    }
    if rel <= opts.tol {
        return Ok(KrylovReport { iterations: opts.max_iter, residual: rel, history });
    }
    Err(Error::NotConverged { solver: NAME, iterations: opts.max_iter, residual: rel, history })
}

/// Right-preconditioned restarted GMRES; the residual never increases.
fn gmres(op: &HelmholtzOperator, b: &[C], x: &mut [C], m: usize, opts: KrylovOptions) -> Result<KrylovReport> {
    const NAME: &str = "gmres";
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
        return Ok(KrylovReport { iterations: 0, residual: 0.0, history: vec![] });
    }
    let inv = inverse_diagonal(op);
    let mut history = Vec::new();
    let mut r = vec![C::new(0.0, 0.0); n];
    let mut w = vec![C::new(0.0, 0.0); n];
    let mut z = vec![C::new(0.0, 0.0); n];
    let mut it = 0;
    loop {
        op.apply(x, &mut r);
        r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        let rel0 = beta / bnorm;
        if rel0 <= opts.tol {
            return Ok(KrylovReport { iterations: it, residual: rel0, history });
        }
        if it >= opts.max_iter {
            return Err(Error::NotConverged { solver: NAME, iterations: it, residual: rel0, history });
        }
        let mut basis: Vec<Vec<C>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<C>> = Vec::new();
        let mut cs: Vec<(C, C)> = Vec::new();
        let mut g = vec![C::new(beta, 0.0)];
        let mut k = 0;
        while k < m && it < opts.max_iter {
            z.par_iter_mut()
                .zip(basis[k].par_iter().zip(inv.par_iter()))
                .for_each(|(zi, (vi, di))| *zi = vi * di);
            op.apply(&z, &mut w);
            let mut col = Vec::with_capacity(k + 2);
            for q in basis.iter() {
                let hq = cdot(q, &w);
                w.par_iter_mut().zip(q.par_iter()).for_each(|(wi, qi)| *wi -= hq * qi);
                col.push(hq);
            }
            let hn = norm(&w);
            col.push(C::new(hn, 0.0));
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c.conj() * a + s.conj() * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (a, bb) = (col[k], col[k + 1]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                return Err(Error::Breakdown { solver: NAME, iteration: it });
            }
            let (c, s) = (a / den, bb / den);
            col[k] = C::new(den, 0.0);
            col[k + 1] = C::new(0.0, 0.0);
            let gk = g[k];
            g[k] = c.conj() * gk;
            g.push(-s * gk);
            cs.push((c, s));
            hess.push(col);
            it += 1;
            k += 1;
            let rel = g[k].norm() / bnorm;
            history.push(rel);
            if rel <= opts.tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the triangular k x k system
        let mut yk = vec![C::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hess[j][i] * yk[j];
            }
            yk[i] = acc / hess[i][i];
        }
        let mut u = vec![C::new(0.0, 0.0); n];
        for (j, yj) in yk.iter().enumerate() {
            u.par_iter_mut().zip(basis[j].par_iter()).for_each(|(ui, vi)| *ui += yj * vi);
        }
        x.par_iter_mut()
            .zip(u.par_iter().zip(inv.par_iter()))
            .for_each(|(xi, (ui, di))| *xi += ui * di);
    }
}
