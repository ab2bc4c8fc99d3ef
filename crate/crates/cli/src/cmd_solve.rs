use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use psomdp::bnb::{solve_bnb, BnbConfig};
use psomdp::compose::CapacityConfig;
use psomdp::solver::{solve_naive, SolverConfig};

use crate::error::CliError;
use crate::model_ref::resolve_model;
use crate::output::{solution_json, write_json};

#[derive(Args)]
pub struct SolveArgs {
    /// Model JSON path or builtin:NAME.
    #[arg(long)]
    pub model: String,
    /// Check-in period override.
    #[arg(long)]
    pub k: Option<u32>,
    /// Discount factor override.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Solver: naive (full composition) or bnb (prefix branch-and-bound).
    #[arg(long, default_value = "naive")]
    pub method: String,
    /// Output path for the solution JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Value-iteration stopping residual.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// State whose value is reported on stdout.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Include the full Q-table in the output file.
    #[arg(long)]
    pub q: bool,
}

pub fn run(args: SolveArgs) -> Result<(), CliError> {
    let model = resolve_model(&args.model, args.k, args.gamma)?;
    if args.start >= model.num_states() {
        return Err(CliError::input(format!(
            "start state {} out of range ({} states)",
            args.start,
            model.num_states()
        )));
    }
    let solver = SolverConfig { tolerance: args.tolerance, ..SolverConfig::default() };
    let capacity = CapacityConfig::default();

    let wall = Instant::now();
    let (solution, pruning) = match args.method.as_str() {
        "naive" => (solve_naive(&model, &solver, &capacity)?, None),
        "bnb" => {
            let config = BnbConfig { solver, capacity, ..BnbConfig::default() };
            let (solution, stats) = solve_bnb(&model, &config)?;
            (solution, Some((stats.pruned_fraction, stats.final_solve_rows)))
        }
        other => return Err(CliError::input(format!("unknown method '{other}'"))),
    };
    let total = wall.elapsed().as_secs_f64();

    let json = solution_json(
        &model,
        &solution,
        &args.method,
        args.tolerance,
        args.start,
        args.q,
        pruning,
    );
    write_json(&args.out, &json)?;

    println!(
        "method={} states={} k={} U(start={}) = {:.9}",
        args.method,
        model.num_states(),
        model.checkin_period(),
        args.start,
        solution.values.get(args.start)
    );
    println!(
        "total {:.3}s (solve {:.3}s, {} iterations, residual {:.2e}){}",
        total,
        solution.stats.seconds,
        solution.stats.iterations,
        solution.stats.residual,
        match pruning {
            Some((f, _)) => format!(", pruned {:.1}% of sequences", 100.0 * f),
            None => String::new(),
        }
    );
    Ok(())
}
