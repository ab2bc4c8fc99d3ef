use std::fs;
use std::path::PathBuf;

use clap::Args;

use psomdp::domains::{
    GridSpec, ACTION_DOWN, ACTION_LEFT, ACTION_RIGHT, ACTION_UP,
};

use crate::error::CliError;
use crate::output::{fmt_f64, read_solution, CsvWriter};

#[derive(Args)]
pub struct RenderArgs {
    /// Solution JSON produced by `psomdp solve`.
    #[arg(long)]
    pub solution: PathBuf,
    /// Grid spec JSON the model was built from (a path or builtin:NAME).
    #[arg(long)]
    pub grid: String,
    /// ascii, ppm, or csv.
    #[arg(long, default_value = "ascii")]
    pub format: String,
    /// Output path (required for ppm; stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overlay per-cell values on the ASCII rendering.
    #[arg(long)]
    pub values: bool,
}

pub fn run(args: RenderArgs) -> Result<(), CliError> {
    let solution = read_solution(&args.solution)?;
    let spec = match args.grid.strip_prefix("builtin:") {
        Some(name) => psomdp::domains::builtin(name)?,
        None => GridSpec::from_json(&fs::read_to_string(&args.grid)?)?,
    };
    let layout = spec.layout();
    if solution.values.len() != layout.num_states {
        return Err(CliError::input(format!(
            "solution has {} states but the grid implies {}",
            solution.values.len(),
            layout.num_states
        )));
    }

    let is_terminal = |r: usize, c: usize| spec.terminals.iter().any(|&(tr, tc, _)| tr == r && tc == c);
    let cell_value = |r: usize, c: usize| {
        layout.cell_state[r * spec.width + c].map(|s| solution.values[s])
    };
    let first_action = |r: usize, c: usize| {
        layout.cell_state[r * spec.width + c].and_then(|s| solution.policy[s].first().copied())
    };

    match args.format.as_str() {
        "ascii" => {
            let mut out = String::new();
            for r in 0..spec.height {
                for c in 0..spec.width {
                    let glyph = if layout.cell_state[r * spec.width + c].is_none() {
                        '#'
                    } else if is_terminal(r, c) {
                        '$'
                    } else {
                        match first_action(r, c) {
                            Some(ACTION_UP) => '↑',
                            Some(ACTION_DOWN) => '↓',
                            Some(ACTION_LEFT) => '←',
                            Some(ACTION_RIGHT) => '→',
                            _ => '.',
                        }
                    };
                    out.push(glyph);
                }
                out.push('\n');
            }
            if args.values {
                out.push('\n');
                for r in 0..spec.height {
                    for c in 0..spec.width {
                        match cell_value(r, c) {
                            None => out.push_str("    ##  "),
                            Some(v) => out.push_str(&format!(" {v:7.4}")),
                        }
                    }
                    out.push('\n');
                }
            }
            emit(&args.out, out.as_bytes())?;
        }
        "csv" => {
            let path = args.out.clone().ok_or_else(|| {
                CliError::input("--out is required for csv rendering".to_string())
            })?;
            let mut csv = CsvWriter::create(&path, &["row", "col", "value", "first_action"])?;
            for r in 0..spec.height {
                for c in 0..spec.width {
                    let (value, action) = match cell_value(r, c) {
                        None => (String::new(), String::new()),
                        Some(v) => (
                            fmt_f64(v),
                            first_action(r, c).map(|a| a.to_string()).unwrap_or_default(),
                        ),
                    };
                    csv.row([r.to_string(), c.to_string(), value, action])?;
                }
            }
        }
        "ppm" => {
            let path = args
                .out
                .clone()
                .ok_or_else(|| CliError::input("--out is required for ppm rendering".to_string()))?;
            let mut free_values = Vec::new();
            for r in 0..spec.height {
                for c in 0..spec.width {
                    if let Some(v) = cell_value(r, c) {
                        free_values.push(v);
                    }
                }
            }
            let min = free_values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = free_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = if max > min { 255.0 / (max - min) } else { 0.0 };
            let mut data = format!("P6\n{} {}\n255\n", spec.width, spec.height).into_bytes();
            for r in 0..spec.height {
                for c in 0..spec.width {
                    let shade = match cell_value(r, c) {
                        None => 0u8,
                        Some(v) => ((v - min) * scale).round().clamp(0.0, 255.0) as u8,
                    };
                    data.extend_from_slice(&[shade, shade, shade]);
                }
            }
            fs::write(&path, data)?;
            let sidecar = path.with_extension("minmax.txt");
            fs::write(&sidecar, format!("min {min}\nmax {max}\n"))?;
        }
        other => return Err(CliError::input(format!("unknown render format '{other}'"))),
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => print!("{}", String::from_utf8_lossy(bytes)),
    }
    Ok(())
}
