use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use klplan::scenario::load_scenario;
use klplan_cli::commands::{cmd_mpc, cmd_plan, cmd_plot, cmd_verify, with_threads};

#[derive(Parser)]
#[command(name = "klplan", version, about = "Plan to goal distributions under uncertainty")]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single planning call from the start belief.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Receding-horizon execution.
    Mpc {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Brute-force checks of the goal-cost reductions.
    Verify {
        #[arg(long, default_value = "reductions")]
        suite: String,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a plan or run directory to SVG.
    Plot {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> klplan::Result<i32> {
    match cli.command {
        Command::Plan { scenario, out, seed } => {
            let loaded = load_scenario(&scenario)?;
            let a = cmd_plan(&loaded, &out, seed)?;
            println!("planned cost {} -> {}", a.cost, a.dir.display());
            Ok(0)
        }
        Command::Mpc {
            scenario,
            out,
            runs,
            seed,
        } => {
            let loaded = load_scenario(&scenario)?;
            let s = cmd_mpc(&loaded, &out, runs, seed)?;
            println!(
                "{} runs: {} converged, {} max_steps, {} infeasible, {} failed; attribution {:?}",
                s.n_runs, s.converged, s.max_steps, s.infeasible, s.failed, s.attribution_counts
            );
            Ok(s.exit_code())
        }
        Command::Verify { suite, instances, seed } => {
            let report = cmd_verify(&suite, instances, seed)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Plot { run, out } => {
            cmd_plot(&run, &out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match with_threads(threads, || run(cli)) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
