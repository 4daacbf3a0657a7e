use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dosched_core::format::sig12;
use dosched_core::harness::{run_experiment, sweep, validate, ExperimentSpec};
use dosched_core::offline::offline_solve;
use dosched_core::sim::{run_online, Algorithm, RunOptions};
use dosched_core::{Error, Instance};

#[derive(Parser)]
#[command(name = "dosched", version, about = "Deadline-oblivious downlink scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, algorithm) cell of a spec.
    Run { spec: PathBuf },
    /// Re-run a spec once per parameter value.
    Sweep {
        spec: PathBuf,
        /// One of p, D_max, V, delta.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Run the invariant suite on the spec's scenario and seeds.
    Validate { spec: PathBuf },
    /// Run one algorithm on a saved instance and print its summary.
    Replay {
        instance: PathBuf,
        #[arg(long)]
        algo: String,
    },
}

enum Outcome {
    Clean,
    Violations(Vec<String>),
}

fn exit_for(err: &anyhow::Error) -> ExitCode {
    match err.downcast_ref::<Error>() {
        Some(Error::Convergence { .. }) => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn replay(instance: &PathBuf, algo: &str) -> anyhow::Result<Outcome> {
    let inst = Instance::load(instance)?;
    let algo: Algorithm = algo.parse()?;
    println!("algorithm,P,D,D_over_P,C,F_max,bound,gap");
    if algo == Algorithm::Offline {
        let off = offline_solve(&inst, 1e-6)?;
        println!("offline,{},,,,{},,{}", sig12(off.objective), sig12(inst.f_max()), sig12(off.gap));
        return Ok(Outcome::Clean);
    }
    let r = run_online(&inst, algo, &RunOptions::default())?;
    let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
    println!(
        "{algo},{},{},{},{},{},{},",
        sig12(r.primal),
        opt(r.dual),
        opt(r.dual_ratio()),
        sig12(r.c),
        sig12(r.f_max),
        sig12(r.bound)
    );
    let violations: Vec<String> = r.monitor.map(|m| m.first.iter().map(|v| v.to_string()).collect()).unwrap_or_default();
    Ok(if violations.is_empty() { Outcome::Clean } else { Outcome::Violations(violations) })
}

fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    Ok(match cli.command {
        Command::Run { spec } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let r = run_experiment(&spec)?;
            for row in &r.aggregate {
                println!("{:<12} median P {:>14}  seeds {}", row.algorithm, sig12(row.median_reward), row.seeds);
            }
            if r.violations.is_empty() { Outcome::Clean } else { Outcome::Violations(r.violations) }
        }
        Command::Sweep { spec, param, values } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let r = sweep(&spec, &param, &values)?;
            for (v, row) in &r.rows {
                println!("{param}={:<8} {:<12} median P {}", sig12(*v), row.algorithm, sig12(row.median_reward));
            }
            if r.violations.is_empty() { Outcome::Clean } else { Outcome::Violations(r.violations) }
        }
        Command::Validate { spec } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let r = validate(&spec)?;
            print!("{}", r.render());
            if r.passed() {
                Outcome::Clean
            } else {
                Outcome::Violations(r.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect())
            }
        }
        Command::Replay { instance, algo } => replay(&instance, &algo)?,
    })
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Violations(v)) => {
            for line in &v {
                eprintln!("violation: {line}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_for(&e)
        }
    }
}
