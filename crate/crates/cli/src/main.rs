use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvgauss_cli::commands::{cmd_analyze, cmd_simulate, cmd_sweep};
use cvgauss_cli::{CliResult, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "cvgauss",
    version,
    about = "Two-drum entanglement: simulate, analyze, sweep"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cool, entangle and read out; writes a record, its tomography and the trajectory.
    Simulate(Common),
    /// Tomography, loss correction and uncertainty budgets of a record CSV.
    Analyze {
        /// Record CSV with header x1,p1,x2,p2.
        record: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Entanglement versus entangling-pulse duration (config `sweep_durations_s`).
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    /// Report only the raw measured quantities.
    #[arg(long)]
    no_correction: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bootstrap replicate count.
    #[arg(long)]
    bootstrap: Option<usize>,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.resolve(&Overrides {
            seed: self.seed,
            shots: self.shots,
            eta1: self.eta1,
            eta2: self.eta2,
            bootstrap: self.bootstrap,
            out: self.out.clone(),
        })
    }
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.resolve()?;
            let r = cmd_simulate(&cfg)?;
            warn(&r.warnings);
            println!(
                "model nu = {:.4}, model nu_meas = {:.4}",
                r.model.nu, r.model.nu_meas
            );
            println!("nu_meas = {}", r.nu_meas);
            println!("entanglement claimed: {}", r.entanglement_claim);
            println!("outputs in {}", cfg.output_dir().display());
        }
        Command::Analyze { record, common } => {
            let cfg = common.resolve()?;
            let r = cmd_analyze(&record, &cfg, common.no_correction)?;
            warn(&r.warnings);
            println!("nu_meas = {}", r.measured.nu_meas);
            if let Some(c) = &r.correction {
                println!("nu (loss corrected) = {}", c.nu);
            }
            println!("report in {}", cfg.output_dir().display());
        }
        Command::Sweep(common) => {
            let cfg = common.resolve()?;
            let s = cmd_sweep(&cfg, common.no_correction)?;
            match s.model_crossing_s {
                Some(t) => println!("model nu_meas crosses 1/2 at {:.2} us", t * 1e6),
                None => println!("model nu_meas does not cross 1/2 in the sweep"),
            }
            println!(
                "{} durations written to {}",
                s.rows.len(),
                cfg.output_dir().display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
