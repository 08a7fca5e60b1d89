//! `strichartz-lab`: deterministic experiment runner for the
//! `strichartz-torus` toolkit.
//!
//! Each subcommand reads one config file (flat `key=value` lines or a
//! JSON object), runs its experiment, and writes `<experiment>.csv` plus
//! `<experiment>.json` into the output directory. Identical configs
//! produce byte-identical outputs regardless of thread count.
//!
//! Exit codes: 0 success, 2 malformed or invalid config (nothing is
//! written), 3 a numerical guard tripped in at least one cell (outputs
//! for the surviving cells are still written, failures are listed in the
//! sidecar), 4 I/O failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

/// Schema errors exit with 2 before any file is written; I/O errors exit
/// with 4. Numerical guard trips never surface here: they are aggregated
/// per cell and reported through exit code 3 after the outputs land.
#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Schema(m) | CliError::Io(m) => m,
        }
    }
}

/// Default output directory when `--out` is absent.
const OUT_ENV: &str = "STRICHARTZ_LAB_OUT";

#[derive(Parser)]
#[command(
    name = "strichartz-lab",
    version,
    about = "Deterministic experiment runner: mixed-norm sweeps, endpoint decompositions, \
dispersive and dyadic kernel profiles, duality checks, and Hartree evolutions on the torus"
)]
struct Cli {
    /// Experiment config file: flat key=value lines or a JSON object.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (default: $STRICHARTZ_LAB_OUT, then the working directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Default RNG seed for configs that do not pin one.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Worker threads for intra-cell parallelism (default: all cores).
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,

    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Subcommand, Clone, Copy)]
enum Experiment {
    /// Cutoff sweep of the extremal-family functional with a log-log slope fit.
    Sweep,
    /// Diagonal vs off-diagonal split of the squared Frobenius norm (d = 1).
    Endpoint,
    /// Short-time dispersive kernel ratios across cutoffs.
    Dispersive,
    /// Orthonormal-family side vs operator side on random instances.
    Duality,
    /// Dyadic-in-time Schatten profile of the windowed kernel.
    Dyadic,
    /// Finite-rank Hartree evolution with conservation monitoring.
    Hartree,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Sweep => "sweep",
            Experiment::Endpoint => "endpoint",
            Experiment::Dispersive => "dispersive",
            Experiment::Duality => "duality",
            Experiment::Dyadic => "dyadic",
            Experiment::Hartree => "hartree",
        }
    }
}

fn main() -> ExitCode {
    match run_cli(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run_cli(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Schema("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Schema(format!("thread pool setup failed: {e}")))?;
    }

    let path = cli
        .config
        .ok_or_else(|| CliError::Schema("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = Config::parse(&text)?;
    let default_seed = cli.seed.unwrap_or(0);

    let outcome = match cli.experiment {
        Experiment::Sweep => run::sweep(&mut cfg),
        Experiment::Endpoint => run::endpoint(&mut cfg, default_seed),
        Experiment::Dispersive => run::dispersive(&mut cfg),
        Experiment::Duality => run::duality(&mut cfg, default_seed),
        Experiment::Dyadic => run::dyadic(&mut cfg, default_seed),
        Experiment::Hartree => run::hartree(&mut cfg),
    }?;

    let out_dir = cli
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::Io(format!(
            "cannot create output directory {}: {e}",
            out_dir.display()
        ))
    })?;

    let base = cli.experiment.name();
    let csv_path = out_dir.join(format!("{base}.csv"));
    std::fs::write(&csv_path, &outcome.csv)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv_path.display())))?;
    let sidecar_path = out_dir.join(format!("{base}.json"));
    let sidecar = serde_json::to_string_pretty(&outcome.sidecar).expect("sidecar serializes") + "\n";
    std::fs::write(&sidecar_path, sidecar)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", sidecar_path.display())))?;

    if outcome.failed_cells > 0 {
        eprintln!(
            "{} cell(s) tripped numerical guards; see {}",
            outcome.failed_cells,
            sidecar_path.display()
        );
        Ok(ExitCode::from(3))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
