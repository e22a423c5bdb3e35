use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wavefluct_cli::config::RunConfig;
use wavefluct_cli::error::{CliError, CliResult, ErrorRecord};
use wavefluct_cli::output::{write_json, Stamp, BUILD};
use wavefluct_cli::pipeline::{self, Ctx};
use wavefluct_cli::verify::{run_suite, table, Suite};

#[derive(Parser)]
#[command(name = "wavefluct", version = BUILD, about = "Wave fluctuations in random high-contrast media")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "WAVEFLUCT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one medium realization.
    SampleMedium {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `medium.eta`.
        #[arg(long)]
        eta: Option<f64>,
        /// Sample index, matching the mc-variance ensemble.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Also write the realization to this path.
        #[arg(long)]
        dump_medium: Option<PathBuf>,
    },
    /// Corrector ensemble on periodic supercells.
    Correctors {
        #[arg(long)]
        config: PathBuf,
        /// Cells per supercell side.
        #[arg(long = "L")]
        l: Option<usize>,
        /// Voxels per cell side.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// Write the corrector fields as raw f64 next to a JSON header.
        #[arg(long)]
        export_fields: bool,
    },
    /// A_eff and mu_eff from the corrector ensemble.
    Effective {
        #[arg(long)]
        config: PathBuf,
    },
    /// Covariance set by nested Monte Carlo.
    Covariances {
        #[arg(long)]
        config: PathBuf,
    },
    /// Heterogeneous Helmholtz ensembles along the eta sweep.
    McVariance {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these eta values.
        #[arg(long, value_delimiter = ',')]
        eta: Option<Vec<f64>>,
    },
    /// Limiting second moments.
    Limit {
        #[arg(long)]
        config: PathBuf,
        /// Covariance report to use instead of the one in the output directory.
        #[arg(long)]
        cov: Option<PathBuf>,
    },
    /// Empirical moments against the limit.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// All stages in order.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a property suite and print a pass/fail table.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Also write the results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SampleMedium { .. } => "sample-medium",
            Command::Correctors { .. } => "correctors",
            Command::Effective { .. } => "effective",
            Command::Covariances { .. } => "covariances",
            Command::McVariance { .. } => "mc-variance",
            Command::Limit { .. } => "limit",
            Command::Compare { .. } => "compare",
            Command::Run { .. } => "run",
            Command::Verify { .. } => "verify",
        }
    }

    fn config(&self) -> Option<&PathBuf> {
        match self {
            Command::SampleMedium { config, .. }
            | Command::Correctors { config, .. }
            | Command::Effective { config }
            | Command::Covariances { config }
            | Command::McVariance { config, .. }
            | Command::Limit { config, .. }
            | Command::Compare { config }
            | Command::Run { config } => Some(config),
            Command::Verify { .. } => None,
        }
    }
}

fn print(value: &impl serde::Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(command: &Command, ctx: Option<&Ctx>) -> CliResult<()> {
    let ctx = || ctx.expect("stage commands carry a config");
    match command {
        Command::SampleMedium { eta, sample, dump_medium, .. } => {
            let s = pipeline::sample_medium_stage(ctx(), *eta, *sample, dump_medium.as_deref())?;
            eprintln!("{} cells at eta = {}", s.cells.len(), s.eta);
        }
        Command::Correctors { l, grid, samples, export_fields, .. } => {
            let c = pipeline::correctors_stage(ctx(), *l, *grid, *samples, *export_fields)?;
            eprintln!("{} supercells of {}^3 cells at {} voxels per cell", c.rows.len(), c.l, c.per_cell);
        }
        Command::Effective { .. } => print(&pipeline::effective_stage(ctx())?)?,
        Command::Covariances { .. } => print(&pipeline::covariances_stage(ctx())?.set)?,
        Command::McVariance { eta, .. } => {
            for p in pipeline::mc_variance_stage(ctx(), eta.as_deref())? {
                println!("eta = {}: E|U|^2 = {:e} +- {:e}", p.eta, p.e_abs2, p.e_abs2_stderr);
            }
        }
        Command::Limit { cov, .. } => print(&pipeline::limit_stage(ctx(), cov.as_deref())?.moments)?,
        Command::Compare { .. } | Command::Run { .. } => {
            let cmp = if matches!(command, Command::Run { .. }) { pipeline::run_pipeline(ctx())? } else { pipeline::compare_stage(ctx())? };
            for r in &cmp.rows {
                println!("eta = {}: {:e} +- {:e}, limit {:e}, band {:e}, within band: {}", r.eta, r.e_abs2, r.e_abs2_stderr, r.limit, r.band, r.within_band);
            }
            println!("monotone: {}, finest within band: {}", cmp.monotone, cmp.finest_within_band);
        }
        Command::Verify { suite, out } => {
            let checks = run_suite(*suite);
            print!("{}", table(&checks));
            if let Some(p) = out {
                let dir = p.parent().map(|d| d.to_path_buf()).unwrap_or_default();
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("verify.json");
                write_json(&dir, name, "verify", &Stamp::new("", 0), &checks)?;
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed.join("; ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let stage = cli.command.name();
    let fail = |e: CliError, dir: Option<&std::path::Path>| {
        let record = ErrorRecord::new(stage, &e);
        let text = serde_json::to_string(&record).unwrap_or_else(|_| e.to_string());
        eprintln!("{text}");
        if let Some(d) = dir {
            let _ = wavefluct_cli::output::write_bytes(&d.join("error.json"), text.as_bytes());
        }
        ExitCode::from(e.exit_code() as u8)
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(CliError::Config(format!("thread pool: {e}")), None);
        }
    }
    let ctx = match cli.command.config().map(|p| RunConfig::load(p)) {
        Some(Ok(l)) => Some(Ctx::new(l)),
        Some(Err(e)) => return fail(e, None),
        None => None,
    };
    match execute(&cli.command, ctx.as_ref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e, ctx.as_ref().map(|c| c.dir())),
    }
}
