//! Numerical laboratory for thin poroelastic plates: scaled 3D Biot solves,
//! the 2D poroelastic Kirchhoff-Love limit model, ε-sweeps, manufactured
//! convergence studies and resultant post-processing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poroplate::cli;
use poroplate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(version, about, long_about = None)]
struct Args {
    /// Config file (flat key-value with [section] headers)
    #[arg(short, long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config and POROPLATE_OUT)
    #[arg(short, long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,

    /// Exit nonzero when any acceptance verdict fails
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the 2D limit model (membrane + bending-pressure) and audit energies
    SolveLimit,
    /// Solve the scaled 3D Biot problem at one thickness ratio
    #[command(name = "solve-3d")]
    Solve3d {
        /// Thickness ratio ε (defaults to params.eps)
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run the ε-sweep: 3D solves, correctors, theorem norms, rates, verdicts
    SweepEpsilon,
    /// Manufactured-solution convergence orders for the limit solvers
    Mms,
    /// Stress resultants, moments and equilibrium residuals of the limit solution
    Resultants,
    /// Aggregate verdict files under the output root into report.txt
    Report,
}

fn resolve_config(args: &Args) -> poroplate::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Ok(dir) = std::env::var("POROPLATE_OUT") {
        cfg.output_dir = PathBuf::from(dir);
    }
    if let Some(dir) = &args.out {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(all_pass) => {
            if args.strict && !all_pass {
                eprintln!("acceptance verdicts failed (--strict)");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &Args) -> poroplate::Result<bool> {
    let cfg = resolve_config(args)?;
    for line in cfg.echo() {
        println!("{line}");
    }
    let verdicts = match &args.command {
        Command::SolveLimit => cli::cmd_solve_limit(&cfg)?,
        Command::Solve3d { eps } => cli::cmd_solve_3d(&cfg, *eps)?,
        Command::SweepEpsilon => cli::cmd_sweep(&cfg)?,
        Command::Mms => cli::cmd_mms(&cfg)?,
        Command::Resultants => cli::cmd_resultants(&cfg)?,
        Command::Report => {
            let (summary, all_pass) = cli::cmd_report(&cfg)?;
            println!("{summary}");
            return Ok(all_pass);
        }
    };
    let mut all_pass = true;
    for v in &verdicts {
        println!("{}", v.line());
        all_pass &= v.pass;
    }
    Ok(all_pass)
}
