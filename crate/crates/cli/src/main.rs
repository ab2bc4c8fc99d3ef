//! `psomdp` — exact solving, bounds, and benchmarks for periodically
//! state-observed MDPs.

mod cmd_bench;
mod cmd_bounds;
mod cmd_counterexample;
mod cmd_render;
mod cmd_solve;
mod error;
mod model_ref;
mod output;

use clap::{Parser, Subcommand};


#[derive(Parser)]
#[command(name = "psomdp", version, about = "Exact solver for periodically state-observed MDPs")]
struct Cli {
    /// Worker threads (overrides PSOMDP_THREADS). Results do not depend on
    /// the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model exactly and write the solution as JSON.
    Solve(cmd_solve::SolveArgs),
    /// Compute upper/lower bound tables and write them as CSV.
    Bounds(cmd_bounds::BoundsArgs),
    /// Time the naive and branch-and-bound solvers across check-in periods.
    Bench(cmd_bench::BenchArgs),
    /// Solve the fixed corridor instance at periods 2 and 3 and report where
    /// the less frequent schedule wins.
    Counterexample(cmd_counterexample::CounterexampleArgs),
    /// Render a solved grid world as ASCII, PPM, or CSV.
    Render(cmd_render::RenderArgs),
}

fn main() {
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("PSOMDP_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n > 0 {
            // Ignore failure: the pool can only be set once per process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let result = match cli.command {
        Command::Solve(args) => cmd_solve::run(args),
        Command::Bounds(args) => cmd_bounds::run(args),
        Command::Bench(args) => cmd_bench::run(args),
        Command::Counterexample(args) => cmd_counterexample::run(args),
        Command::Render(args) => cmd_render::run(args),
    };

    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
