//! Run configuration, read from TOML.
//!
//! Physical defaults, used when a key is missing from `[medium]`:
//! `k0 = 3.0`, `a_b = 0.8`, `xi = 0.05`. The inclusion coefficient law is
//! configuration; the shipped configs use complex `a` with positive imaginary
//! part (lossy inclusions, as in brine pockets in sea ice).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wavefluct::cell::corrector::CorrectorOptions;
use wavefluct::cell::laplace::CgOptions;
use wavefluct::helmholtz::{GaussianBump, GridSpec, KrylovOptions};
use wavefluct::laws::{ALaw, Nu0, DEFAULT_MAX_ATTEMPTS};
use wavefluct::medium::{DomainB, MediumConfig, ZSpec};
use wavefluct::mnstats::{CovarianceConfig, NQuadrature};

use crate::error::{CliError, CliResult};

/// `[medium]` with the physical defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    /// Reference eta for `sample-medium`; the sweep overrides it.
    pub eta: f64,
    #[serde(default = "default_k0")]
    pub k0: f64,
    #[serde(default = "default_a_b")]
    pub a_b: f64,
    pub domain_b: DomainB,
    #[serde(default = "default_xi")]
    pub xi: f64,
    pub nu0: Nu0,
    pub nu1: ALaw,
    /// Defaults to the largest eta in the sweep.
    pub delta_margin: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub z: ZSpec,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_k0() -> f64 {
    3.0
}
fn default_a_b() -> f64 {
    0.8
}
fn default_xi() -> f64 {
    0.05
}
fn default_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupercellSection {
    /// Cells per side.
    pub l: usize,
    /// Voxels per cell side.
    pub per_cell: usize,
    /// Independent supercells for `A_eff`.
    #[serde(default = "one")]
    pub samples: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Helmholtz Krylov tolerance and iteration cap.
    pub tol: f64,
    pub max_iter: usize,
    /// Corrector CG tolerance (max norm) and iteration cap.
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_iter")]
    pub cg_max_iter: usize,
    /// Helmholtz spacing; refined to `eta / 8` per sweep point.
    pub h: f64,
    pub pad: f64,
    pub pml_width: f64,
    #[serde(default)]
    pub allow_thin_pml: bool,
}

fn default_cg_tol() -> f64 {
    1e-9
}
fn default_cg_iter() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    /// Medium samples per eta.
    pub mc_samples: usize,
    /// Nested MC for the covariances.
    pub outer: usize,
    #[serde(default = "one")]
    pub inner: usize,
    /// Noise draws for the sampled limit (0 skips it).
    #[serde(default)]
    pub noise_draws: usize,
    /// Quadrature-free estimate of `C^theta,*` (0 skips it).
    #[serde(default)]
    pub n_mc_samples: usize,
    /// Rerun the covariances at `L - 2`.
    #[serde(default)]
    pub l_sensitivity: bool,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_modes() -> usize {
    4000
}
fn default_nodes() -> usize {
    24
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub medium: MediumSection,
    pub supercell: SupercellSection,
    pub solver: SolverSection,
    pub budgets: BudgetSection,
    pub eta_sweep: Vec<f64>,
    pub f_spec: GaussianBump,
    pub g_spec: GaussianBump,
    /// Depth of `B_delta`. Defaults to `delta_margin`.
    pub delta: Option<f64>,
    pub output_dir: PathBuf,
}

/// A validated configuration and the hash of its canonical form.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub hash: String,
    pub path: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Loaded> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if config.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                config.output_dir = dir.join(&config.output_dir);
            }
        }
        config.validate()?;
        let hash = config.hash()?;
        Ok(Loaded { config, hash, path: path.to_path_buf() })
    }

    /// sha256 of the canonical JSON form, so key order and formatting in the
    /// TOML file do not matter. `output_dir` is excluded.
    pub fn hash(&self) -> CliResult<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn delta_margin(&self) -> f64 {
        self.medium.delta_margin.unwrap_or_else(|| self.eta_sweep.iter().cloned().fold(self.medium.eta, f64::max))
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| self.delta_margin())
    }

    /// The medium at one eta.
    pub fn medium_at(&self, eta: f64) -> MediumConfig {
        let m = &self.medium;
        MediumConfig {
            eta,
            k0: m.k0,
            a_b: m.a_b,
            domain_b: m.domain_b.clone(),
            xi: m.xi,
            nu0: m.nu0.clone(),
            nu1: m.nu1.clone(),
            delta_margin: self.delta_margin(),
            seed: m.seed,
            z: m.z.clone(),
            max_attempts: m.max_attempts,
        }
    }

    pub fn grid(&self) -> GridSpec {
        let s = &self.solver;
        GridSpec { h: s.h, pad: s.pad, pml_width: s.pml_width, allow_thin_pml: s.allow_thin_pml }
    }

    pub fn krylov(&self) -> KrylovOptions {
        KrylovOptions { tol: self.solver.tol, max_iter: self.solver.max_iter, ..Default::default() }
    }

    pub fn corrector(&self) -> CorrectorOptions {
        CorrectorOptions { cg: CgOptions { tol: self.solver.cg_tol, max_iter: self.solver.cg_max_iter }, ..Default::default() }
    }

    pub fn covariance(&self) -> CovarianceConfig {
        let b = &self.budgets;
        CovarianceConfig {
            nu0: self.medium.nu0.clone(),
            nu1: self.medium.nu1.clone(),
            xi: self.medium.xi,
            k0: self.medium.k0,
            l: self.supercell.l,
            per_cell: self.supercell.per_cell,
            outer: b.outer,
            inner: b.inner,
            corrector: self.corrector(),
            quadrature: NQuadrature { rho_nodes: b.quadrature_nodes, ..Default::default() },
            n_mc_samples: b.n_mc_samples,
            l_sensitivity: b.l_sensitivity,
            max_attempts: self.medium.max_attempts,
        }
    }

    /// Every constraint the stages would check, checked up front.
    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.eta_sweep.is_empty() {
            return fail("eta_sweep is empty".into());
        }
        for &eta in self.eta_sweep.iter().chain(std::iter::once(&self.medium.eta)) {
            self.medium_at(eta).validate()?;
        }
        let delta = self.delta();
        if delta.is_nan() || delta < 0.0 {
            return fail(format!("delta = {delta} must be non-negative"));
        }
        for (name, b) in [("f_spec", &self.f_spec), ("g_spec", &self.g_spec)] {
            if !(b.width > 0.0 && b.cutoff > 0.0) {
                return fail(format!("{name}: width and cutoff must be positive"));
            }
            let c = b.clearance(&self.medium.domain_b);
            if c <= 0.0 {
                return fail(format!("{name} must be supported outside the closure of B (clearance {c:.3})"));
            }
        }
        let s = &self.solver;
        if !(s.tol > 0.0 && s.cg_tol > 0.0 && s.h > 0.0 && s.pad >= 0.0 && s.pml_width > 0.0) {
            return fail("solver: tol, cg_tol, h and pml_width must be positive and pad non-negative".into());
        }
        let (lo, hi) = self.medium.domain_b.bounding_box();
        for (name, b) in [("f_spec", &self.f_spec), ("g_spec", &self.g_spec)] {
            let r = b.support_radius();
            if (0..3).any(|k| b.center[k] - r < lo[k] - s.pad || b.center[k] + r > hi[k] + s.pad) {
                return fail(format!("{name} reaches past the pad into the PML; widen solver.pad"));
            }
        }
        if self.supercell.l == 0 || self.supercell.samples == 0 {
            return fail("supercell: l and samples must be at least 1".into());
        }
        self.covariance().validate()?;
        // jackknife error bars need two samples in every leave-one-out set
        if self.budgets.mc_samples < 3 || self.budgets.outer < 3 {
            return fail("budgets.mc_samples and budgets.outer must be at least 3".into());
        }
        if (1..3).contains(&self.budgets.noise_draws) {
            return fail("budgets.noise_draws must be 0 or at least 3".into());
        }
        Ok(())
    }
}
