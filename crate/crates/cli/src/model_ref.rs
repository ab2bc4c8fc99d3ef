use std::path::Path;

use psomdp::domains::{build_gridworld, builtin, load_model};
use psomdp::PsoMdp;

use crate::error::CliError;

/// Resolves `--model` (a JSON file path or `builtin:NAME`) with optional
/// period and discount overrides.
pub fn resolve_model(
    model_ref: &str,
    k: Option<u32>,
    gamma: Option<f64>,
) -> Result<PsoMdp, CliError> {
    let model = match model_ref.strip_prefix("builtin:") {
        Some(name) => {
            let mut spec = builtin(name)?;
            if let Some(k) = k {
                spec.checkin_period = k;
            }
            if let Some(g) = gamma {
                spec.gamma = g;
            }
            build_gridworld(&spec)?
        }
        None => {
            let mut model = load_model(Path::new(model_ref))?;
            if let Some(k) = k {
                model = model.with_period(k)?;
            }
            if let Some(g) = gamma {
                model = model.with_discount(g)?;
            }
            model
        }
    };
    Ok(model)
}
