use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use psomdp::bnb::{solve_bnb, BnbConfig};
use psomdp::compose::{compose, CapacityConfig};
use psomdp::solver::{value_iteration, SolverConfig};
use psomdp::PsoMdp;

use crate::error::CliError;
use crate::model_ref::resolve_model;
use crate::output::{fmt_f64, CsvWriter};

#[derive(Args)]
pub struct BenchArgs {
    /// Model JSON path or builtin:NAME.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Comma-separated check-in periods to benchmark.
    #[arg(long = "k-list", default_value = "4,5,6")]
    pub k_list: String,
    #[arg(long, default_value_t = 1)]
    pub repeats: u32,
    /// Comma-separated methods to run.
    #[arg(long, default_value = "naive,bnb")]
    pub methods: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

struct Cell {
    formulate_seconds: f64,
    solve_seconds: f64,
    pruned_fraction: f64,
    value_checksum: f64,
}

/// Sum of state values rounded to 1e-6; equal across methods when they agree.
fn checksum(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    (sum * 1e6).round() / 1e6
}

fn run_cell(model: &PsoMdp, method: &str, solver: &SolverConfig) -> Result<Cell, CliError> {
    let capacity = CapacityConfig::default();
    match method {
        "naive" => {
            let start = Instant::now();
            let composed = compose(model, model.checkin_period(), None, &capacity)?;
            let formulate_seconds = start.elapsed().as_secs_f64();
            let gamma_step = model.discount().powi(model.checkin_period() as i32);
            let solution = value_iteration(&composed, None, gamma_step, solver)?;
            Ok(Cell {
                formulate_seconds,
                solve_seconds: solution.stats.seconds,
                pruned_fraction: 0.0,
                value_checksum: checksum(solution.values.as_slice()),
            })
        }
        "bnb" => {
            let config = BnbConfig { solver: solver.clone(), capacity, ..BnbConfig::default() };
            let (solution, stats) = solve_bnb(model, &config)?;
            let formulate_seconds: f64 = stats.stages.iter().map(|s| s.compose_seconds).sum();
            Ok(Cell {
                formulate_seconds,
                solve_seconds: stats.total_seconds - formulate_seconds,
                pruned_fraction: stats.pruned_fraction,
                value_checksum: checksum(solution.values.as_slice()),
            })
        }
        other => Err(CliError::input(format!("unknown method '{other}'"))),
    }
}

pub fn run(args: BenchArgs) -> Result<(), CliError> {
    let ks: Vec<u32> = args
        .k_list
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| CliError::input(format!("bad k '{p}'"))))
        .collect::<Result<_, _>>()?;
    let methods: Vec<String> =
        args.methods.split(',').map(|m| m.trim().to_string()).filter(|m| !m.is_empty()).collect();
    let solver = SolverConfig { tolerance: args.tolerance, ..SolverConfig::default() };

    let mut csv = CsvWriter::create(
        &args.out,
        &[
            "k",
            "method",
            "repeat",
            "formulate_seconds",
            "solve_seconds",
            "total_seconds",
            "pruned_fraction",
            "value_checksum",
            "status",
        ],
    )?;

    for &k in &ks {
        let model = match resolve_model(&args.model, Some(k), args.gamma) {
            Ok(m) => m,
            Err(err) => {
                for method in &methods {
                    for repeat in 0..args.repeats {
                        csv.row([
                            k.to_string(),
                            method.clone(),
                            repeat.to_string(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            format!("error: {err}"),
                        ])?;
                    }
                }
                continue;
            }
        };
        for method in &methods {
            for repeat in 0..args.repeats {
                match run_cell(&model, method, &solver) {
                    Ok(cell) => {
                        let total = cell.formulate_seconds + cell.solve_seconds;
                        println!(
                            "k={k} {method} repeat {repeat}: formulate {:.3}s solve {:.3}s \
                             checksum {}",
                            cell.formulate_seconds,
                            cell.solve_seconds,
                            fmt_f64(cell.value_checksum)
                        );
                        csv.row([
                            k.to_string(),
                            method.clone(),
                            repeat.to_string(),
                            fmt_f64(cell.formulate_seconds),
                            fmt_f64(cell.solve_seconds),
                            fmt_f64(total),
                            fmt_f64(cell.pruned_fraction),
                            fmt_f64(cell.value_checksum),
                            "ok".into(),
                        ])?;
                    }
                    Err(err) => {
                        println!("k={k} {method} repeat {repeat}: {err}");
                        csv.row([
                            k.to_string(),
                            method.clone(),
                            repeat.to_string(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            format!("error: {err}"),
                        ])?;
                    }
                }
            }
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
