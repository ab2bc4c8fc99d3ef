use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use psomdp::compose::PROB_DROP_THRESHOLD;
use psomdp::{PsoMdp, Solution};

use crate::error::CliError;

/// Per-state `[action_sequence, value]` pairs.
pub type QJson = Vec<Vec<(Vec<usize>, f64)>>;

/// Solution file schema.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionJson {
    pub values: Vec<f64>,
    /// Per-state optimal action sequence, as action indices.
    pub policy: Vec<Vec<usize>>,
    /// Present when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<QJson>,
    pub stats: StatsJson,
    pub meta: MetaJson,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsJson {
    pub iterations: usize,
    pub residual: f64,
    pub solve_seconds: f64,
    pub composed_entries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_solve_rows: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetaJson {
    pub version: String,
    pub model_hash: String,
    pub layout_hash: String,
    pub k: u32,
    pub gamma: f64,
    pub method: String,
    pub tolerance: f64,
    pub prob_drop_threshold: f64,
    pub start_state: usize,
}

/// `(pruned_fraction, final_solve_rows)` reported by the branch-and-bound
/// method; absent for the naive solver.
pub type PruningReport = Option<(f64, usize)>;

pub fn solution_json(
    model: &PsoMdp,
    solution: &Solution,
    method: &str,
    tolerance: f64,
    start_state: usize,
    include_q: bool,
    pruning: PruningReport,
) -> SolutionJson {
    let num_actions = model.num_actions();
    SolutionJson {
        values: solution.values.as_slice().to_vec(),
        policy: solution.policy.iter().map(|seq| seq.decode(num_actions)).collect(),
        q: include_q.then(|| {
            (0..model.num_states())
                .map(|s| {
                    solution
                        .q
                        .entries(s)
                        .iter()
                        .map(|&(seq, v)| (seq.decode(num_actions), v))
                        .collect()
                })
                .collect()
        }),
        stats: StatsJson {
            iterations: solution.stats.iterations,
            residual: solution.stats.residual,
            solve_seconds: solution.stats.seconds,
            composed_entries: solution.stats.composed_entries,
            pruned_fraction: pruning.map(|(f, _)| f),
            final_solve_rows: pruning.map(|(_, rows)| rows),
        },
        meta: MetaJson {
            version: env!("CARGO_PKG_VERSION").to_string(),
            model_hash: model.content_hash(),
            layout_hash: model.layout_hash(),
            k: model.checkin_period(),
            gamma: model.discount(),
            method: method.to_string(),
            tolerance,
            prob_drop_threshold: PROB_DROP_THRESHOLD,
            start_state,
        },
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Solve(format!("serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_solution(path: &Path) -> Result<SolutionJson, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("bad solution file: {e}")))
}

/// Minimal RFC 4180 writer: header row, CRLF line endings, fields are
/// numbers or dash-joined indices so no quoting is ever needed.
pub struct CsvWriter {
    out: Box<dyn Write>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<CsvWriter, CliError> {
        let file = fs::File::create(path)?;
        let mut writer = CsvWriter { out: Box::new(file) };
        writer.row(header.iter().map(|s| s.to_string()))?;
        Ok(writer)
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), CliError> {
        let line = fields.into_iter().collect::<Vec<_>>().join(",");
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\r\n"))
            .map_err(CliError::from)
    }
}

/// Formats a float with enough digits to round-trip.
pub fn fmt_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}
