use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rnls::io::{parse_config_as, ExperimentKind};
use rnls::runner::{run, EXIT_CONFIG, EXIT_IO};

#[derive(Parser)]
#[command(
    name = "rnls",
    version,
    about = "Rotating NLS / Gross-Pitaevskii spectral simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overrides the config's `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue an evolve run from a checkpoint file.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Radial ground state, sharp constants and the constrained minimizer.
    Groundstate(Common),
    /// Time evolution with diagnostics and checkpoints.
    Evolve(Common),
    /// Threshold sweep over mass factors.
    Sweep(Common),
    /// Orbital stability runs around the constrained minimizer.
    Stability(Common),
    /// Energies of the fast-rotation vortex family.
    Vortex(Common),
    /// Threshold sweep for a spatially varying coefficient.
    Inhom(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Groundstate(c) => (ExperimentKind::Groundstate, c),
        Command::Evolve(c) => (ExperimentKind::Evolve, c),
        Command::Sweep(c) => (ExperimentKind::Sweep, c),
        Command::Stability(c) => (ExperimentKind::Stability, c),
        Command::Vortex(c) => (ExperimentKind::Vortex, c),
        Command::Inhom(c) => (ExperimentKind::Inhomogeneous, c),
    };
    let text = match &common.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(EXIT_IO as u8);
            }
        },
        None => String::new(),
    };
    let cfg = match parse_config_as(&text, Some(kind)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let out = common.out.unwrap_or_else(|| PathBuf::from(&cfg.output));
    match run(&cfg, &out, common.resume.as_deref()) {
        Ok(code) => {
            println!("{}", out.join("summary.json").display());
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
