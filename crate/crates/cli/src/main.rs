//! `latcoh`: run the lattice-coherence experiments from a TOML configuration.
//!
//! Exit status: 0 success, 2 configuration error, 3 convergence failure,
//! 4 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lattice_coherence::commands::{self, Outcome};
use lattice_coherence::config::{parse_range, RunConfig};
use lattice_coherence::states::NumberModel;
use lattice_coherence::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "latcoh",
    version,
    about = "Bloch-oscillation coherence of condensate arrays in a tilted optical lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ensemble size.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Depth sweep START:STOP:STEP in recoil energies.
    #[arg(long, global = true)]
    depths: Option<String>,
    /// Tilt sweep START:STOP:STEP as E/h in Hz (bloch only).
    #[arg(long, global = true)]
    scan_gradient: Option<String>,
    /// Disable imaging noise.
    #[arg(long, global = true)]
    no_noise: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Number statistics of the loaded wells.
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Coherent,
    Squeezed,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the default configuration file (to --config, else OUT/config.toml).
    Init,
    /// Bose-Hubbard parameters over the depth sweep.
    Params,
    /// Bloch oscillation of one sample, or the width-versus-tilt scan.
    Bloch,
    /// Incoherent fraction and quantum depletion versus depth.
    Squeezing,
    /// Width growth and coherence time; per-depth table with --depths.
    Coherence,
    /// Width revival after the gradient is switched off.
    Rephase,
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.ensemble.seed = s;
    }
    if let Some(n) = common.samples {
        cfg.ensemble.n_samples = n;
    }
    if let Some(w) = common.workers {
        cfg.ensemble.workers = w;
    }
    if common.no_noise {
        cfg.imaging.noise = false;
    }
    if let Some(m) = common.model {
        cfg.ensemble.model = match m {
            ModelArg::Coherent => NumberModel::Coherent,
            ModelArg::Squeezed => NumberModel::Squeezed,
        };
    }
    if let Some(d) = &common.depths {
        cfg.analysis.depths = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let c = &cli.common;
    if let Command::Init = cli.command {
        let path = c.config.clone().unwrap_or_else(|| c.out.join("config.toml"));
        return commands::cmd_init(&path);
    }
    let cfg = load(c)?;
    let explicit_depths = c.depths.as_deref().map(parse_range).transpose()?;
    match cli.command {
        Command::Init => unreachable!("handled above"),
        Command::Params => commands::cmd_params(&cfg, &cfg.depths()?, &c.out),
        Command::Bloch => {
            let scan = c.scan_gradient.as_deref().map(parse_range).transpose()?;
            commands::cmd_bloch(&cfg, scan.as_deref(), &c.out)
        }
        Command::Squeezing => commands::cmd_squeezing(&cfg, &cfg.depths()?, &c.out),
        Command::Coherence => commands::cmd_coherence(&cfg, explicit_depths.as_deref(), &c.out),
        Command::Rephase => commands::cmd_rephase(&cfg, &c.out),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Fit(_) | Error::Convergence(_) | Error::StepSize { .. } => EXIT_CONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: a headline fit failed; see the notes in the CSV output");
                ExitCode::from(EXIT_CONVERGENCE)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
