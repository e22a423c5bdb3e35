//! The random high-contrast medium.
//!
//! Space is tiled by cubes `eta (j - z + Z)`, `Z = (0,1)^3`. Each cube fully
//! enclosed in the scatterer region `B` carries one spherical inclusion
//! `eta B(j - z + theta_j, rho_j)` with coefficient `eta^2 a_j`. The
//! background takes `a_b` inside `B` and `1` outside.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{admissible, ALaw, Nu0, DEFAULT_MAX_ATTEMPTS};
use crate::rng::{tag, RngKey};

/// One cell's inclusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionParams {
    pub theta: [f64; 3],
    pub rho: f64,
    pub a: Complex64,
}

impl InclusionParams {
    pub fn validate(&self, xi: f64) -> Result<()> {
        if !admissible(self.theta, self.rho, xi) {
            return Err(Error::Config(format!(
                "inclusion theta={:?} rho={} violates the margin xi={xi}",
                self.theta, self.rho
            )));
        }
        if !(self.a.im > 0.0) {
            return Err(Error::Config(format!("Im a must be positive, got {}", self.a)));
        }
        Ok(())
    }
}

/// The region `B` containing the inclusions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainB {
    Box { lo: [f64; 3], hi: [f64; 3] },
    Ball { center: [f64; 3], radius: f64 },
}

impl DomainB {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DomainB::Box { lo, hi } => (0..3).all(|k| lo[k] < hi[k]),
            DomainB::Ball { radius, .. } => *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate region {self:?}")))
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn depth(&self, x: [f64; 3]) -> f64 {
        match self {
            DomainB::Box { lo, hi } => {
                let inside = (0..3).map(|k| (x[k] - lo[k]).min(hi[k] - x[k])).fold(f64::INFINITY, f64::min);
                if inside >= 0.0 {
                    inside
                } else {
                    let mut d2 = 0.0;
                    for k in 0..3 {
                        let e = (lo[k] - x[k]).max(x[k] - hi[k]).max(0.0);
                        d2 += e * e;
                    }
                    -d2.sqrt()
                }
            }
            DomainB::Ball { center, radius } => radius - dist(x, *center),
        }
    }

    /// Open-set membership.
    pub fn contains(&self, x: [f64; 3]) -> bool {
        self.depth(x) > 0.0
    }

    pub fn contains_closed(&self, x: [f64; 3]) -> bool {
        self.depth(x) >= 0.0
    }

    /// Whether the closed cube `lo + [0, side]^3` lies in the open region.
    pub fn encloses_cube(&self, lo_c: [f64; 3], side: f64) -> bool {
        match self {
            DomainB::Box { lo, hi } => (0..3).all(|k| lo_c[k] > lo[k] && lo_c[k] + side < hi[k]),
            DomainB::Ball { .. } => {
                // convex region: the cube's corners suffice
                (0..8).all(|c| {
                    let p = [
                        lo_c[0] + side * (c & 1) as f64,
                        lo_c[1] + side * ((c >> 1) & 1) as f64,
                        lo_c[2] + side * ((c >> 2) & 1) as f64,
                    ];
                    self.contains(p)
                })
            }
        }
    }

    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            DomainB::Box { lo, hi } => (*lo, *hi),
            DomainB::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            DomainB::Box { lo, hi } => (0..3).map(|k| hi[k] - lo[k]).product(),
            DomainB::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }
}

/// How the global shift `z` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZSpec {
    Fixed { z: [f64; 3] },
    Uniform,
}

impl Default for ZSpec {
    fn default() -> Self {
        ZSpec::Fixed { z: [0.0; 3] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub eta: f64,
    pub k0: f64,
    pub a_b: f64,
    pub domain_b: DomainB,
    pub xi: f64,
    pub nu0: Nu0,
    pub nu1: ALaw,
    pub delta_margin: f64,
    pub seed: u64,
    #[serde(default)]
    pub z: ZSpec,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

impl MediumConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.xi > 0.0 && self.xi < 0.5) {
            return fail(format!("xi = {} must lie in (0, 1/2)", self.xi));
        }
        if !(self.eta > 0.0) {
            return fail(format!("eta = {} must be positive", self.eta));
        }
        if !(self.k0 > 0.0) {
            return fail(format!("k0 = {} must be positive", self.k0));
        }
        if !(self.a_b > 0.0) {
            return fail(format!("a_b = {} must be positive", self.a_b));
        }
        if self.delta_margin < self.eta {
            return fail(format!("delta_margin = {} must be at least eta = {}", self.delta_margin, self.eta));
        }
        if let ZSpec::Fixed { z } = &self.z {
            if z.iter().any(|c| !(0.0..1.0).contains(c)) {
                return fail(format!("z = {z:?} must lie in [0,1)^3"));
            }
        }
        self.domain_b.validate()?;
        self.nu0.validate()?;
        self.nu1.validate()
    }

    /// Cells `j` with `eta (j - z + Z)` enclosed in `B`.
    pub fn cells_in_b(&self, z: [f64; 3]) -> Vec<[i64; 3]> {
        let (lo, hi) = self.domain_b.bounding_box();
        let range = |k: usize| {
            let a = (lo[k] / self.eta + z[k]).floor() as i64 - 1;
            let b = (hi[k] / self.eta + z[k]).ceil() as i64 + 1;
            a..=b
        };
        let mut out = Vec::new();
        for i in range(0) {
            for j in range(1) {
                for k in range(2) {
                    let c = [i, j, k];
                    if self.domain_b.encloses_cube(cell_origin(self.eta, z, c), self.eta) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// Lower corner of cell `j`: `eta (j - z)`.
pub fn cell_origin(eta: f64, z: [f64; 3], j: [i64; 3]) -> [f64; 3] {
    [
        eta * (j[0] as f64 - z[0]),
        eta * (j[1] as f64 - z[1]),
        eta * (j[2] as f64 - z[2]),
    ]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Inclusion parameters with the keys that produced them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellEntry {
    pub params: InclusionParams,
    pub theta_key: RngKey,
    pub a_key: RngKey,
}

/// A realization of the medium on a set of cells.
#[derive(Clone, Debug, PartialEq)]
pub struct MediumSample {
    pub eta: f64,
    pub z: [f64; 3],
    pub cells: BTreeMap<[i64; 3], CellEntry>,
}

/// Laws plus the admissibility margin: everything needed to draw a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLaw {
    pub nu0: Nu0,
    pub nu1: ALaw,
    pub xi: f64,
    pub max_attempts: usize,
}

impl CellLaw {
    pub fn from_config(cfg: &MediumConfig) -> Self {
        CellLaw { nu0: cfg.nu0.clone(), nu1: cfg.nu1.clone(), xi: cfg.xi, max_attempts: cfg.max_attempts }
    }

    fn draw_geometry(&self, key: &RngKey) -> Result<([f64; 3], f64)> {
        self.nu0.draw(self.xi, key, self.max_attempts)
    }

    fn draw_a(&self, key: &RngKey) -> Complex64 {
        self.nu1.draw(&mut key.rng())
    }

    /// Draw the cell at index `j` from the tree rooted at `root`.
    pub fn draw_cell(&self, root: &RngKey, j: [i64; 3]) -> Result<CellEntry> {
        let ck = root.cell(j);
        let theta_key = ck.child(tag::THETA);
        let a_key = ck.child(tag::A);
        let (theta, rho) = self.draw_geometry(&theta_key)?;
        Ok(CellEntry { params: InclusionParams { theta, rho, a: self.draw_a(&a_key) }, theta_key, a_key })
    }
}

/// Draw one admissible triple: (theta, rho) and a come from independent
/// children of `key`.
pub fn sample_inclusion(nu0: &Nu0, nu1: &ALaw, xi: f64, key: &RngKey) -> Result<InclusionParams> {
    let (theta, rho) = nu0.draw(xi, &key.child(tag::THETA), DEFAULT_MAX_ATTEMPTS)?;
    let a = nu1.draw(&mut key.child(tag::A).rng());
    Ok(InclusionParams { theta, rho, a })
}

/// Draw a medium realization on the cells enclosed in `B`.
pub fn sample_medium(cfg: &MediumConfig, key: &RngKey) -> Result<MediumSample> {
    cfg.validate()?;
    let z = match &cfg.z {
        ZSpec::Fixed { z } => *z,
        ZSpec::Uniform => {
            let mut r = key.child(tag::Z).rng();
            [r.random(), r.random(), r.random()]
        }
    };
    let law = CellLaw::from_config(cfg);
    let mut cells = BTreeMap::new();
    for j in cfg.cells_in_b(z) {
        cells.insert(j, law.draw_cell(key, j)?);
    }
    Ok(MediumSample { eta: cfg.eta, z, cells })
}

/// An axis-aligned box of cell indices `lo..hi` (exclusive).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellWindow {
    pub lo: [i64; 3],
    pub hi: [i64; 3],
}

impl CellWindow {
    pub fn cube(n: i64) -> Self {
        CellWindow { lo: [0; 3], hi: [n; 3] }
    }

    pub fn iter(&self) -> impl Iterator<Item = [i64; 3]> + '_ {
        let (lo, hi) = (self.lo, self.hi);
        (lo[0]..hi[0]).flat_map(move |i| (lo[1]..hi[1]).flat_map(move |j| (lo[2]..hi[2]).map(move |k| [i, j, k])))
    }

    pub fn translate(&self, s: [i64; 3]) -> Self {
        CellWindow {
            lo: [self.lo[0] + s[0], self.lo[1] + s[1], self.lo[2] + s[2]],
            hi: [self.hi[0] + s[0], self.hi[1] + s[1], self.hi[2] + s[2]],
        }
    }
}

/// Draw a medium on a full lattice window, unit cells, `z = 0`.
pub fn sample_window(law: &CellLaw, key: &RngKey, window: CellWindow) -> Result<MediumSample> {
    let mut cells = BTreeMap::new();
    for j in window.iter() {
        cells.insert(j, law.draw_cell(key, j)?);
    }
    Ok(MediumSample { eta: 1.0, z: [0.0; 3], cells })
}

/// Which component class a swap replaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// The geometric pair (theta, rho).
    Theta,
    A,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapSpec {
    pub alpha: Component,
    pub set: BTreeSet<[i64; 3]>,
    pub j: [i64; 3],
    /// Additionally replace every (theta, rho) (the a-family star variant).
    pub star_mode: bool,
}

/// Replace components by those of an independent copy. The copy is the
/// sample whose tree is rooted at `key`, so repeated swaps with one key all
/// read from the same copy.
pub fn resample(sample: &MediumSample, law: &CellLaw, swap: &SwapSpec, key: &RngKey) -> Result<MediumSample> {
    if swap.set.contains(&swap.j) {
        return Err(Error::Config(format!("distinguished cell {:?} lies in the swap set", swap.j)));
    }
    for c in swap.set.iter().chain(std::iter::once(&swap.j)) {
        if !sample.cells.contains_key(c) {
            return Err(Error::MissingCell(*c));
        }
    }
    if swap.star_mode && swap.alpha == Component::Theta {
        return Err(Error::Config("star mode applies to the a-family only".into()));
    }
    let mut out = sample.clone();
    let redraw_theta = |entry: &mut CellEntry, j: [i64; 3]| -> Result<()> {
        let k = key.cell(j).child(tag::THETA);
        let (theta, rho) = law.draw_geometry(&k)?;
        entry.params.theta = theta;
        entry.params.rho = rho;
        entry.theta_key = k;
        Ok(())
    };
    match swap.alpha {
        Component::Theta => {
            for j in &swap.set {
                redraw_theta(out.cells.get_mut(j).unwrap(), *j)?;
            }
        }
        Component::A => {
            for j in &swap.set {
                let e = out.cells.get_mut(j).unwrap();
                let k = key.cell(*j).child(tag::A);
                e.params.a = law.draw_a(&k);
                e.a_key = k;
            }
            if swap.star_mode {
                for (j, e) in out.cells.iter_mut() {
                    redraw_theta(e, *j)?;
                }
            }
        }
    }
    Ok(out)
}

/// The shift `T_x`: `m_j -> m_{j + [z + x]}`, `z -> z + x - [z + x]`.
/// `query` is the window the caller needs after the shift.
pub fn shift_medium(sample: &MediumSample, x: [f64; 3], query: Option<CellWindow>) -> Result<MediumSample> {
    let mut s = [0i64; 3];
    let mut z = [0.0; 3];
    for k in 0..3 {
        let t = sample.z[k] + x[k];
        let f = t.floor();
        s[k] = f as i64;
        z[k] = t - f;
    }
    let cells: BTreeMap<_, _> = sample
        .cells
        .iter()
        .map(|(j, e)| ([j[0] - s[0], j[1] - s[1], j[2] - s[2]], *e))
        .collect();
    if let Some(w) = query {
        if let Some(missing) = w.iter().find(|j| !cells.contains_key(j)) {
            return Err(Error::MissingCell([missing[0] + s[0], missing[1] + s[1], missing[2] + s[2]]));
        }
    }
    Ok(MediumSample { eta: sample.eta, z, cells })
}

impl MediumSample {
    /// The cell containing `x`, with local coordinates in `[0,1)^3`.
    pub fn locate(&self, x: [f64; 3]) -> ([i64; 3], [f64; 3]) {
        let mut j = [0i64; 3];
        let mut y = [0.0; 3];
        for k in 0..3 {
            let t = x[k] / self.eta + self.z[k];
            let f = t.floor();
            j[k] = f as i64;
            y[k] = t - f;
        }
        (j, y)
    }

    /// Index of the inclusion containing `x`, if any.
    pub fn inclusion_at(&self, x: [f64; 3]) -> Option<[i64; 3]> {
        let (j, y) = self.locate(x);
        let e = self.cells.get(&j)?;
        (dist(y, e.params.theta) < e.params.rho).then_some(j)
    }

    /// Check disjointness and the boundary margin of every inclusion.
    pub fn check_geometry(&self, xi: f64) -> Result<()> {
        for (j, e) in &self.cells {
            e.params.validate(xi).map_err(|err| Error::Geometry(format!("cell {j:?}: {err}")))?;
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = (&[i64; 3], &InclusionParams)> {
        self.cells.iter().map(|(j, e)| (j, &e.params))
    }

    pub fn snapshot(&self) -> MediumSnapshot {
        MediumSnapshot {
            eta: self.eta,
            z: self.z,
            cells: self
                .cells
                .iter()
                .map(|(j, e)| SnapshotCell { j: *j, theta: e.params.theta, rho: e.params.rho, a: [e.params.a.re, e.params.a.im] })
                .collect(),
        }
    }
}

/// Coefficient `a_eta(x)`: 1 outside closed `B`, `a_b` in `B`, `eta^2 a_j`
/// inside inclusion `j`.
pub fn coefficient_at(sample: &MediumSample, cfg: &MediumConfig, x: [f64; 3]) -> Complex64 {
    if !cfg.domain_b.contains_closed(x) {
        return Complex64::new(1.0, 0.0);
    }
    match sample.inclusion_at(x) {
        Some(j) => sample.eta * sample.eta * sample.cells[&j].params.a,
        None => Complex64::new(cfg.a_b, 0.0),
    }
}

/// JSON form of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumSnapshot {
    pub eta: f64,
    pub z: [f64; 3],
    pub cells: Vec<SnapshotCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCell {
    pub j: [i64; 3],
    pub theta: [f64; 3],
    pub rho: f64,
    pub a: [f64; 2],
}
