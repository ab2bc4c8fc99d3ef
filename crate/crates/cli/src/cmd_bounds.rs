use std::path::PathBuf;

use clap::Args;

use psomdp::bounds::{
    lower_bound_suffix, omniscient_values, upper_bound_divisor, upper_bound_general, CheckinSet,
    SuffixSpec,
};
use psomdp::compose::CapacityConfig;
use psomdp::solver::SolverConfig;
use psomdp::SeqId;

use crate::error::CliError;
use crate::model_ref::resolve_model;
use crate::output::{fmt_f64, CsvWriter};

#[derive(Args)]
pub struct BoundsArgs {
    /// Model JSON path or builtin:NAME.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Comma-separated extra check-in strides, e.g. "2,4".
    #[arg(long = "upper-B")]
    pub upper_b: Option<String>,
    /// Single stride dividing the period.
    #[arg(long = "upper-ell")]
    pub upper_ell: Option<u32>,
    /// Prefix length for the suffix-restricted lower bound.
    #[arg(long = "lower-tau")]
    pub lower_tau: Option<u32>,
    /// Lower-bound suffix: "nop" or "action:<index>".
    #[arg(long = "lower-suffix", default_value = "nop")]
    pub lower_suffix: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Output CSV path (columns: state,kind,key,value).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: BoundsArgs) -> Result<(), CliError> {
    let model = resolve_model(&args.model, args.k, args.gamma)?;
    let solver = SolverConfig { tolerance: args.tolerance, ..SolverConfig::default() };
    let capacity = CapacityConfig::default();
    let num_actions = model.num_actions();
    let key_of = |seq: &SeqId| {
        seq.decode(num_actions).iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    };

    let mut csv = CsvWriter::create(&args.out, &["state", "kind", "key", "value"])?;
    let mut rows = 0usize;

    if let Some(spec) = &args.upper_b {
        let mut members = Vec::new();
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            members.push(
                part.parse::<u32>()
                    .map_err(|_| CliError::input(format!("bad stride '{part}' in --upper-B")))?,
            );
        }
        let checkins = CheckinSet::new(&members, model.checkin_period())?;
        let family = upper_bound_general(&model, &checkins, &solver, &capacity, None)?;
        let full = family.table(0).expect("offset 0 is always materialized");
        for s in 0..model.num_states() {
            for (seq, v) in full.entries(s) {
                csv.row([s.to_string(), "upper_prefix".into(), key_of(seq), fmt_f64(*v)])?;
                rows += 1;
            }
        }
    }

    if let Some(ell) = args.upper_ell {
        let table = upper_bound_divisor(&model, ell, &solver, &capacity, None)?;
        for s in 0..model.num_states() {
            for (seq, v) in table.entries(s) {
                csv.row([s.to_string(), "upper_prefix".into(), key_of(seq), fmt_f64(*v)])?;
                rows += 1;
            }
        }
    }

    if let Some(tau) = args.lower_tau {
        let suffix = parse_suffix(&args.lower_suffix)?;
        let (q_lb, u_lb) = lower_bound_suffix(&model, tau, &suffix, &solver, &capacity, None)?;
        for s in 0..model.num_states() {
            for (seq, v) in q_lb.entries(s) {
                csv.row([s.to_string(), "lower_prefix".into(), key_of(seq), fmt_f64(*v)])?;
                rows += 1;
            }
            csv.row([s.to_string(), "lower_state".into(), String::new(), fmt_f64(u_lb.get(s))])?;
            rows += 1;
        }
    }

    let omni = omniscient_values(&model, &solver, &capacity)?;
    for s in 0..model.num_states() {
        csv.row([s.to_string(), "omniscient".into(), String::new(), fmt_f64(omni.get(s))])?;
        rows += 1;
    }

    println!("wrote {rows} bound rows to {}", args.out.display());
    Ok(())
}

fn parse_suffix(text: &str) -> Result<SuffixSpec, CliError> {
    if text == "nop" {
        return Ok(SuffixSpec::NopRepeat);
    }
    if let Some(idx) = text.strip_prefix("action:") {
        let action = idx
            .parse::<usize>()
            .map_err(|_| CliError::input(format!("bad action index '{idx}' in --lower-suffix")))?;
        return Ok(SuffixSpec::ActionRepeat(action));
    }
    Err(CliError::input(format!(
        "bad --lower-suffix '{text}' (expected 'nop' or 'action:<index>')"
    )))
}
