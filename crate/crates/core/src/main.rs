use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dhflow::checkpoint::read_checkpoint;
use dhflow::config::{parse_config, Preset, RunConfig};
use dhflow::error::{Error, Result};
use dhflow::runner::{run_experiment, EXIT_FAILURE};

#[derive(Parser)]
#[command(name = "dhflow", version, about = "Regularized Dirac-harmonic map heat flow on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for randomized initial data (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-trajectory preset (degree1_blowup, convergence).
    Run { config: PathBuf },
    /// Run a sweep preset (decoupled_sweep, epsilon_sweep).
    Sweep { config: PathBuf },
    /// Run the identities preset.
    Identities { config: PathBuf },
    /// Print the header and energies of a checkpoint.
    Inspect { checkpoint: PathBuf },
}

fn load(path: &Path, cli: &Cli, allowed: &[Preset], cmd: &str) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = parse_config(path)?;
    if !allowed.contains(&cfg.preset) {
        return Err(Error::config("preset", format!("preset {:?} cannot be run with `{cmd}`", cfg.preset)));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::config("out_dir", "no output directory (use --out-dir or out_dir)"))?;
    Ok((cfg, out))
}

fn inspect(path: &Path) -> Result<String> {
    let s = read_checkpoint(path)?;
    let g = s.u.grid();
    let e = s.energy();
    Ok(format!(
        "grid {}x{} on [0,{}]x[0,{}], spin ({},{})\ntarget {:?}\neps {}\nt {}\nE_eps {}\ndirichlet {}\ndirac_pairing {}\nspinor_gradient {}\npsi_l2 {}\npsi_sup {}",
        g.nx, g.ny, g.lx, g.ly, g.spin.delta1, g.spin.delta2, s.u.target, s.eps, s.t, e.e_eps, e.dirichlet,
        e.dirac_pairing, e.spinor_gradient, e.psi_l2, e.psi_sup
    ))
}

fn execute(cli: &Cli) -> Result<i32> {
    use Preset::*;
    let (path, allowed, name) = match &cli.command {
        Command::Inspect { checkpoint } => {
            println!("{}", inspect(checkpoint)?);
            return Ok(0);
        }
        Command::Run { config } => (config, &[Degree1Blowup, Convergence][..], "run"),
        Command::Sweep { config } => (config, &[DecoupledSweep, EpsilonSweep][..], "sweep"),
        Command::Identities { config } => (config, &[Identities][..], "identities"),
    };
    let (cfg, out) = load(path, cli, allowed, name)?;
    let report = run_experiment(&cfg, &out)?;
    if !cli.quiet {
        for l in &report.lines {
            println!("{l}");
        }
        println!("output: {}", report.out_dir.display());
    }
    Ok(report.code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
