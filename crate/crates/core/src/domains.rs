//! Grid-world model generators and the model JSON format.
//!
//! Grids use four movement actions (up, down, left, right) with slippery
//! dynamics: a commanded move keeps the agent in place with probability
//! `slip_stay`, drifts to each side of the commanded direction with
//! probability `slip_lateral`, and otherwise goes where told. Mass that
//! would enter an obstacle or leave the grid stays in place instead.
//!
//! Entering a terminal cell pays that cell's reward on the entering
//! transition (folded into the expected immediate reward); terminal cells
//! then fall through to an absorbing zero-reward sink, so the reward is
//! collected exactly once per trajectory. An optional no-op action holds
//! every state in place at zero reward, including terminals, as the no-op
//! contract requires.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionId, ModelError, ModelParts, PsoMdp};

pub const ACTION_UP: ActionId = 0;
pub const ACTION_DOWN: ActionId = 1;
pub const ACTION_LEFT: ActionId = 2;
pub const ACTION_RIGHT: ActionId = 3;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("unknown builtin model '{0}' (try benchmark_6x11, benchmark_4x7, counterexample)")]
    UnknownBuiltin(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Description of a grid-world instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Blocked cells as `(row, col)`.
    #[serde(default)]
    pub obstacles: Vec<(usize, usize)>,
    /// Rewarding cells as `(row, col, reward)`.
    pub terminals: Vec<(usize, usize, f64)>,
    pub slip_stay: f64,
    pub slip_lateral: f64,
    #[serde(default)]
    pub step_reward: f64,
    pub gamma: f64,
    pub checkin_period: u32,
    #[serde(default)]
    pub include_nop: bool,
}

/// Mapping between grid cells and model state indices.
#[derive(Debug, Clone)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    /// `cell_state[row * width + col]` is the state index of a free cell.
    pub cell_state: Vec<Option<usize>>,
    /// The absorbing sink state (always the last index).
    pub sink: usize,
    pub num_states: usize,
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<GridSpec, DomainError> {
        serde_json::from_str(text).map_err(|e| DomainError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid spec serializes")
    }

    fn check(&self) -> Result<(), DomainError> {
        if self.width == 0 || self.height == 0 {
            return Err(DomainError::InvalidSpec("grid must be non-empty".into()));
        }
        if self.slip_stay < 0.0 || self.slip_lateral < 0.0 {
            return Err(DomainError::InvalidSpec("slip probabilities must be non-negative".into()));
        }
        if self.slip_stay + 2.0 * self.slip_lateral > 1.0 + 1e-12 {
            return Err(DomainError::InvalidSpec(format!(
                "slip_stay + 2*slip_lateral = {} exceeds 1",
                self.slip_stay + 2.0 * self.slip_lateral
            )));
        }
        let in_bounds = |r: usize, c: usize| r < self.height && c < self.width;
        for &(r, c) in &self.obstacles {
            if !in_bounds(r, c) {
                return Err(DomainError::InvalidSpec(format!("obstacle ({r}, {c}) out of bounds")));
            }
        }
        for &(r, c, _) in &self.terminals {
            if !in_bounds(r, c) {
                return Err(DomainError::InvalidSpec(format!("terminal ({r}, {c}) out of bounds")));
            }
            if self.obstacles.contains(&(r, c)) {
                return Err(DomainError::InvalidSpec(format!(
                    "cell ({r}, {c}) is both terminal and obstacle"
                )));
            }
        }
        Ok(())
    }

    /// Assigns state indices to free cells (row-major) plus the sink.
    pub fn layout(&self) -> GridLayout {
        let mut cell_state = vec![None; self.width * self.height];
        let mut next = 0usize;
        for r in 0..self.height {
            for c in 0..self.width {
                if !self.obstacles.contains(&(r, c)) {
                    cell_state[r * self.width + c] = Some(next);
                    next += 1;
                }
            }
        }
        GridLayout {
            width: self.width,
            height: self.height,
            cell_state,
            sink: next,
            num_states: next + 1,
        }
    }
}

/// Builds the PSO-MDP for a grid spec.
pub fn build_gridworld(spec: &GridSpec) -> Result<PsoMdp, DomainError> {
    spec.check()?;
    let layout = spec.layout();
    let num_states = layout.num_states;
    let num_actions = if spec.include_nop { 5 } else { 4 };
    let nop_action = spec.include_nop.then_some(4usize);

    let terminal_reward = |r: usize, c: usize| -> Option<f64> {
        spec.terminals.iter().find(|&&(tr, tc, _)| tr == r && tc == c).map(|&(_, _, w)| w)
    };

    let mut transitions = vec![vec![Vec::new(); num_actions]; num_states];
    let mut rewards = vec![vec![0.0; num_actions]; num_states];

    for r in 0..spec.height {
        for c in 0..spec.width {
            let Some(s) = layout.cell_state[r * spec.width + c] else { continue };
            if terminal_reward(r, c).is_some() {
                // Terminal cell: any movement falls into the sink at zero
                // reward (the entering transition already paid).
                for row in transitions[s].iter_mut().take(4) {
                    *row = vec![(layout.sink, 1.0)];
                }
            } else {
                for dir in 0..4usize {
                    let mut mass = vec![0.0f64; num_states];
                    let mut add = |target: Option<usize>, p: f64, here: usize| {
                        // Blocked or off-grid movement stays in place.
                        mass[target.unwrap_or(here)] += p;
                    };
                    let intended = 1.0 - spec.slip_stay - 2.0 * spec.slip_lateral;
                    let (lat_a, lat_b) = lateral_of(dir);
                    add(neighbor_state(&layout, r, c, dir), intended, s);
                    add(neighbor_state(&layout, r, c, lat_a), spec.slip_lateral, s);
                    add(neighbor_state(&layout, r, c, lat_b), spec.slip_lateral, s);
                    mass[s] += spec.slip_stay;

                    let mut row = Vec::new();
                    let mut reward = spec.step_reward;
                    for (target, &p) in mass.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        row.push((target, p));
                        if target != s {
                            if let Some((tr, tc)) = cell_of(&layout, target) {
                                if let Some(w) = terminal_reward(tr, tc) {
                                    reward += p * w;
                                }
                            }
                        }
                    }
                    transitions[s][dir] = row;
                    rewards[s][dir] = reward;
                }
            }
            if spec.include_nop {
                transitions[s][4] = vec![(s, 1.0)];
                rewards[s][4] = 0.0;
            }
        }
    }
    // Sink self-loops for every action.
    for a in 0..num_actions {
        transitions[layout.sink][a] = vec![(layout.sink, 1.0)];
        rewards[layout.sink][a] = 0.0;
    }

    Ok(PsoMdp::validate(ModelParts {
        num_states,
        num_actions,
        transitions,
        rewards,
        checkin_period: spec.checkin_period,
        discount: spec.gamma,
        nop_action,
    })?)
}

fn lateral_of(dir: usize) -> (usize, usize) {
    match dir {
        ACTION_UP | ACTION_DOWN => (ACTION_LEFT, ACTION_RIGHT),
        _ => (ACTION_UP, ACTION_DOWN),
    }
}

fn neighbor_state(layout: &GridLayout, r: usize, c: usize, dir: usize) -> Option<usize> {
    let (nr, nc) = match dir {
        ACTION_UP => (r.checked_sub(1)?, c),
        ACTION_DOWN => (r + 1, c),
        ACTION_LEFT => (r, c.checked_sub(1)?),
        ACTION_RIGHT => (r, c + 1),
        _ => unreachable!("movement direction"),
    };
    if nr >= layout.height || nc >= layout.width {
        return None;
    }
    layout.cell_state[nr * layout.width + nc]
}

fn cell_of(layout: &GridLayout, state: usize) -> Option<(usize, usize)> {
    layout
        .cell_state
        .iter()
        .position(|&cs| cs == Some(state))
        .map(|i| (i / layout.width, i % layout.width))
}

/// Which of the two counterexample instances to build; the layout is shared
/// and only the check-in period differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterexampleVariant {
    K2,
    K3,
}

/// Fixed corridor with obstacle ranks three columns apart and a rewarding
/// rightmost column. Slip is lateral-only at 5% per side. Check-ins every
/// third step line up with the rank crossings; every second step does not,
/// which is what makes the more frequent schedule worse in places.
pub fn counterexample_spec() -> GridSpec {
    let mut obstacles = Vec::new();
    for &col in &[2usize, 5, 8, 11] {
        for row in 0..5usize {
            if row != 2 {
                obstacles.push((row, col));
            }
        }
    }
    GridSpec {
        width: 14,
        height: 5,
        obstacles,
        terminals: (0..5).map(|r| (r, 13, 1.0)).collect(),
        slip_stay: 0.0,
        slip_lateral: 0.05,
        step_reward: 0.0,
        gamma: 0.95,
        checkin_period: 3,
        include_nop: false,
    }
}

pub fn build_counterexample(variant: CounterexampleVariant) -> PsoMdp {
    let mut spec = counterexample_spec();
    spec.checkin_period = match variant {
        CounterexampleVariant::K2 => 2,
        CounterexampleVariant::K3 => 3,
    };
    build_gridworld(&spec).expect("fixed counterexample layout is valid")
}

/// Named, versioned grid specs used by the CLI and the test suite.
pub fn builtin(name: &str) -> Result<GridSpec, DomainError> {
    match name {
        "benchmark_6x11" => Ok(GridSpec {
            width: 11,
            height: 6,
            obstacles: vec![(1, 2), (2, 2), (3, 2), (4, 5), (4, 6), (1, 8), (2, 8)],
            terminals: vec![(2, 10, 1.0), (3, 10, 1.0)],
            slip_stay: 0.05,
            slip_lateral: 0.075,
            step_reward: 0.0,
            gamma: 0.95,
            checkin_period: 6,
            include_nop: true,
        }),
        "benchmark_4x7" => Ok(GridSpec {
            width: 7,
            height: 4,
            obstacles: vec![(1, 3), (2, 3), (1, 5)],
            terminals: vec![(1, 6, 1.0), (2, 6, 1.0)],
            slip_stay: 0.05,
            slip_lateral: 0.075,
            step_reward: 0.0,
            gamma: 0.95,
            checkin_period: 4,
            include_nop: true,
        }),
        "counterexample" => Ok(counterexample_spec()),
        other => Err(DomainError::UnknownBuiltin(other.to_string())),
    }
}

/// On-disk model format.
#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    checkin_period: u32,
    nop_action: Option<usize>,
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    rewards: Vec<Vec<f64>>,
}

pub fn model_from_json(text: &str) -> Result<PsoMdp, DomainError> {
    let raw: ModelJson = serde_json::from_str(text).map_err(|e| DomainError::Parse(e.to_string()))?;
    Ok(PsoMdp::validate(ModelParts {
        num_states: raw.num_states,
        num_actions: raw.num_actions,
        transitions: raw.transitions,
        rewards: raw.rewards,
        checkin_period: raw.checkin_period,
        discount: raw.gamma,
        nop_action: raw.nop_action,
    })?)
}

pub fn model_to_json(model: &PsoMdp) -> String {
    let raw = ModelJson {
        num_states: model.num_states(),
        num_actions: model.num_actions(),
        gamma: model.discount(),
        checkin_period: model.checkin_period(),
        nop_action: model.nop_action(),
        transitions: (0..model.num_states())
            .map(|s| {
                (0..model.num_actions())
                    .map(|a| {
                        model
                            .successors(s, a)
                            .iter()
                            .map(|&(succ, p)| (succ as usize, p))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
        rewards: (0..model.num_states())
            .map(|s| (0..model.num_actions()).map(|a| model.reward(s, a)).collect())
            .collect(),
    };
    serde_json::to_string(&raw).expect("model serializes")
}

pub fn load_model(path: &Path) -> Result<PsoMdp, DomainError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DomainError::Parse(format!("{}: {e}", path.display())))?;
    model_from_json(&text)
}

pub fn save_model(model: &PsoMdp, path: &Path) -> Result<(), DomainError> {
    fs::write(path, model_to_json(model))?;
    Ok(())
}
