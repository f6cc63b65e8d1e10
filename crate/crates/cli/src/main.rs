mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vspectra::config::Config;
use vspectra::verify::Suite;
use vspectra::{Error, ModelParams};

#[derive(Debug, Parser)]
#[command(name = "vspectra", version, about = "Spectral stability analysis and torus simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalue branches and the growth supremum.
    #[command(subcommand)]
    Dispersion(DispersionCmd),
    /// Linear evolution of radial data and decay-rate fits.
    #[command(subcommand)]
    Semigroup(SemigroupCmd),
    /// Growing initial data and the two-sided growth certificate.
    #[command(subcommand)]
    Instability(InstabilityCmd),
    /// Pseudospectral run on the periodic box.
    Simulate(SimulateArgs),
    /// Run a named verification battery.
    Verify(VerifyArgs),
}

#[derive(Debug, Subcommand)]
enum DispersionCmd {
    /// Tabulate the three eigenvalues over a log-spaced wavenumber grid.
    Scan(ScanArgs),
    /// Locate the growth supremum and classify the parameter set.
    Growth(Common),
}

#[derive(Debug, Subcommand)]
enum SemigroupCmd {
    /// Norms of the evolved low-frequency profile over time.
    Decay(DecayArgs),
    /// Fit decay exponents and compare with the predicted rates.
    Check(DecayArgs),
}

#[derive(Debug, Subcommand)]
enum InstabilityCmd {
    /// Build the bump data and certify the growth sandwich.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Stable,
    Unstable,
}

#[derive(Debug, Args)]
struct Common {
    /// Model config file (`[model]` section).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set used when no config is given.
    #[arg(long, value_enum, default_value = "stable")]
    preset: Preset,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn params(&self) -> vspectra::Result<ModelParams> {
        match &self.config {
            Some(path) => Config::from_file(path)?.model_params(),
            None => Ok(match self.preset {
                Preset::Stable => ModelParams::default_stable(),
                Preset::Unstable => ModelParams::default_unstable(),
            }),
        }
    }
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1e-4)]
    r_min: f64,
    #[arg(long, default_value_t = 1e4)]
    r_max: f64,
    #[arg(long, default_value_t = 1000)]
    points: usize,
}

#[derive(Debug, Args)]
struct DecayArgs {
    #[command(flatten)]
    common: Common,
    /// Start of the fit window.
    #[arg(long, default_value_t = 1e2)]
    t_min: f64,
    /// End of the fit window.
    #[arg(long, default_value_t = 1e4)]
    t_max: f64,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: Common,
    /// Growth margin in (0, Theta/2); defaults to Theta/4.
    #[arg(long)]
    theta_bar: Option<f64>,
    /// Last sample time; defaults to 20/Theta.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value_t = 20)]
    samples: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Box length; defaults to 8 pi.
    #[arg(long = "L")]
    length: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    /// L2 norm of each field in the random initial data.
    #[arg(long, default_value_t = 1e-3)]
    amplitude: f64,
    /// Escape threshold; defaults to 0.05 rho_bar.
    #[arg(long)]
    epsilon0: Option<f64>,
    /// Escape sweep `hi:lo` (one delta per decade) or a comma list.
    #[arg(long)]
    delta_sweep: Option<String>,
    /// Cap on simulated time for each sweep run.
    #[arg(long)]
    sweep_t_max: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    sample_every: u64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_suite)]
    suite: Suite,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for a library error: 1 for usage, config, regime and I/O
/// problems, 3 for numeric aborts.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Vacuum { .. } | Error::StepFailure { .. } | Error::Domain(_) | Error::Window(_)) => 3,
        _ => 1,
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("VSPECTRA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("VSPECTRA_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Dispersion(DispersionCmd::Scan(a)) => commands::dispersion_scan(&a.common, a.r_min, a.r_max, a.points),
        Command::Dispersion(DispersionCmd::Growth(c)) => commands::dispersion_growth(&c),
        Command::Semigroup(SemigroupCmd::Decay(a)) => commands::semigroup_decay(&a.common, (a.t_min, a.t_max)),
        Command::Semigroup(SemigroupCmd::Check(a)) => commands::semigroup_check(&a.common, (a.t_min, a.t_max)),
        Command::Instability(InstabilityCmd::Certify(a)) => {
            commands::certify(&a.common, a.theta_bar, a.t_max, a.samples)
        }
        Command::Simulate(a) => commands::simulate(&a),
        Command::Verify(a) => commands::verify(&a.common, a.suite),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
