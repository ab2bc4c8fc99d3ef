//! Value iteration over sequence actions, and the value of mid-period state
//! revelations.
//!
//! The sequence-action process is an ordinary MDP whose actions are the
//! length-`t` sequences of a composed model, so the optimal Q-values satisfy
//!
//! ```text
//! Q(s, a) = R^{t,g}(s, a) + g_step * sum_{s'} T^t(s' | a, s) * max_{a'} Q(s', a')
//! ```
//!
//! where `g_step` is the discount raised to the number of real time steps
//! the sequence spans. That exponent is passed explicitly because it is not
//! always the table length: a table whose rows were built for `t` steps can
//! stand in for full periods of length `k` when the remaining `k - t` steps
//! provably change nothing (see [`crate::bounds`]).
//!
//! Sweeps are synchronous (each sweep reads only the previous iterate) and
//! per-row summations run in a fixed order, so solutions are bit-identical
//! for any thread count. Iteration stops when the sup-norm residual between
//! consecutive value iterates drops to `tolerance`; the induced error on the
//! reported values is at most `tolerance * g_step / (1 - g_step)`.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::compose::{compose, CapacityConfig, ComposeError, ComposedModel};
use crate::model::{PsoMdp, SeqId, StateId};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("state {0} has no available action sequences")]
    NoActionsAvailable(StateId),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("sequence code {code} is not covered by the composed model at state {state}")]
    MissingSequence { state: StateId, code: u64 },
    #[error("offset {0} is outside the check-in period")]
    BadOffset(u32),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// Convergence settings for value iteration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Sup-norm residual at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Worker-thread hint; solutions do not depend on it. The process-wide
    /// pool is configured by the caller (the CLI reads `--threads`).
    pub parallelism: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tolerance: 1e-9, max_iterations: 100_000, parallelism: None }
    }
}

/// Q-values keyed by `(state, sequence)`; all sequences share one length.
#[derive(Debug, Clone)]
pub struct QTable {
    length: u32,
    per_state: Vec<Vec<(SeqId, f64)>>,
}

impl QTable {
    pub fn new(length: u32, per_state: Vec<Vec<(SeqId, f64)>>) -> QTable {
        QTable { length, per_state }
    }

    pub fn seq_length(&self) -> u32 {
        self.length
    }

    pub fn num_states(&self) -> usize {
        self.per_state.len()
    }

    /// Entries for one state, sorted by sequence code.
    pub fn entries(&self, state: StateId) -> &[(SeqId, f64)] {
        &self.per_state[state]
    }

    pub fn get(&self, state: StateId, seq: SeqId) -> Option<f64> {
        let row = &self.per_state[state];
        row.binary_search_by_key(&seq.code(), |e| e.0.code()).ok().map(|i| row[i].1)
    }

    /// Greatest value at a state, with the smallest-code argmax.
    pub fn best(&self, state: StateId) -> Option<(SeqId, f64)> {
        let mut best: Option<(SeqId, f64)> = None;
        for &(seq, v) in &self.per_state[state] {
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((seq, v)),
            }
        }
        best
    }
}

/// State values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn get(&self, state: StateId) -> f64 {
        self.0[state]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
    pub composed_entries: usize,
}

/// Converged Q-values, state values, and the greedy policy.
#[derive(Debug, Clone)]
pub struct Solution {
    pub q: QTable,
    pub values: ValueTable,
    /// Per-state optimal sequence; ties break toward the smallest code.
    pub policy: Vec<SeqId>,
    pub stats: SolveStats,
}

/// Solves the sequence-action fixed point by synchronous value iteration.
///
/// `available` restricts the usable sequences per state; `None` uses every
/// row of the composed model. `gamma_step` is the per-decision discount
/// (the base discount raised to the number of time steps a decision spans).
pub fn value_iteration(
    composed: &ComposedModel,
    available: Option<&[Vec<SeqId>]>,
    gamma_step: f64,
    config: &SolverConfig,
) -> Result<Solution, SolverError> {
    let start = Instant::now();
    let num_states = composed.num_states();

    // Resolve the usable rows per state once.
    let row_sets: Vec<Vec<usize>> = match available {
        None => (0..num_states)
            .map(|s| {
                let n = composed.rows(s).len();
                (0..n).collect()
            })
            .collect(),
        Some(sets) => {
            let mut resolved = Vec::with_capacity(num_states);
            for (s, set) in sets.iter().enumerate() {
                let rows = composed.rows(s);
                let mut idx = Vec::with_capacity(set.len());
                for seq in set {
                    let i = rows
                        .binary_search_by_key(&seq.code(), |r| r.seq.code())
                        .map_err(|_| SolverError::MissingSequence { state: s, code: seq.code() })?;
                    idx.push(i);
                }
                resolved.push(idx);
            }
            resolved
        }
    };
    for (s, rows) in row_sets.iter().enumerate() {
        if rows.is_empty() {
            return Err(SolverError::NoActionsAvailable(s));
        }
    }

    let mut values = vec![0.0f64; num_states];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < config.max_iterations {
        iterations += 1;
        let next: Vec<f64> = (0..num_states)
            .into_par_iter()
            .map(|s| {
                let rows = composed.rows(s);
                let mut best = f64::NEG_INFINITY;
                for &i in &row_sets[s] {
                    let row = &rows[i];
                    let mut expect = 0.0;
                    for &(succ, p) in &row.succs {
                        expect += p * values[succ as usize];
                    }
                    let q = row.reward + gamma_step * expect;
                    if q > best {
                        best = q;
                    }
                }
                best
            })
            .collect();
        residual = next
            .par_iter()
            .zip(values.par_iter())
            .map(|(a, b)| (a - b).abs())
            .reduce(|| 0.0, f64::max);
        values = next;
        if residual <= config.tolerance {
            break;
        }
    }
    if residual > config.tolerance {
        return Err(SolverError::NonConvergence { iterations, residual });
    }

    // One more half-sweep to expose Q-values consistent with the converged
    // value function; the policy attains `values` in `q` exactly.
    let q_rows: Vec<Vec<(SeqId, f64)>> = (0..num_states)
        .into_par_iter()
        .map(|s| {
            let rows = composed.rows(s);
            row_sets[s]
                .iter()
                .map(|&i| {
                    let row = &rows[i];
                    let mut expect = 0.0;
                    for &(succ, p) in &row.succs {
                        expect += p * values[succ as usize];
                    }
                    (row.seq, row.reward + gamma_step * expect)
                })
                .collect()
        })
        .collect();
    let q = QTable::new(composed.length(), q_rows);
    let mut final_values = Vec::with_capacity(num_states);
    let mut policy = Vec::with_capacity(num_states);
    for s in 0..num_states {
        let (seq, v) = q.best(s).expect("nonempty action set");
        final_values.push(v);
        policy.push(seq);
    }

    Ok(Solution {
        q,
        values: ValueTable(final_values),
        policy,
        stats: SolveStats {
            iterations,
            residual,
            seconds: start.elapsed().as_secs_f64(),
            composed_entries: composed.entry_count(),
        },
    })
}

/// Greedy policy from a Q-table; ties break toward the smallest code.
pub fn extract_policy(
    q: &QTable,
    available: Option<&[Vec<SeqId>]>,
) -> Result<Vec<SeqId>, SolverError> {
    let mut policy = Vec::with_capacity(q.num_states());
    for s in 0..q.num_states() {
        let best = match available {
            None => q.best(s),
            Some(sets) => {
                let mut best: Option<(SeqId, f64)> = None;
                for seq in &sets[s] {
                    let v = q
                        .get(s, *seq)
                        .ok_or(SolverError::MissingSequence { state: s, code: seq.code() })?;
                    match best {
                        Some((_, bv)) if v <= bv => {}
                        _ => best = Some((*seq, v)),
                    }
                }
                best
            }
        };
        match best {
            Some((seq, _)) => policy.push(seq),
            None => return Err(SolverError::NoActionsAvailable(s)),
        }
    }
    Ok(policy)
}

/// Value of an unscheduled state revelation arriving `tau` steps into a
/// period, for an agent that otherwise follows the solved values `u_star`.
///
/// On learning its state with `k - tau` steps left until the regular
/// check-in, the agent re-plans the remaining suffix freely:
///
/// ```text
/// U_bonus(s) = max_{z in A^{k-tau}} R^{k-tau,g}(s, z)
///              + g^{k-tau} * sum_{s'} T^{k-tau}(s' | z, s) * u_star(s')
/// ```
pub fn unannounced_bonus_value(
    model: &PsoMdp,
    u_star: &ValueTable,
    tau: u32,
    capacity: &CapacityConfig,
) -> Result<ValueTable, SolverError> {
    let k = model.checkin_period();
    if tau >= k {
        return Err(SolverError::BadOffset(tau));
    }
    let remaining = k - tau;
    let tail = compose(model, remaining, None, capacity)?;
    let gamma_tail = model.discount().powi(remaining as i32);
    let values = (0..model.num_states())
        .into_par_iter()
        .map(|s| {
            let mut best = f64::NEG_INFINITY;
            for row in tail.rows(s) {
                let mut expect = 0.0;
                for &(succ, p) in &row.succs {
                    expect += p * u_star.get(succ as usize);
                }
                let v = row.reward + gamma_tail * expect;
                if v > best {
                    best = v;
                }
            }
            best
        })
        .collect();
    Ok(ValueTable(values))
}

/// Q-values of length-`tau` prefixes when a revelation `tau` steps into the
/// period is known ahead of time.
///
/// The agent commits only to the prefix; at the announced check-in it will
/// re-plan the suffix with fresh state information, so the continuation is
/// the bonus value derived from `q_star`:
///
/// ```text
/// Q1(s, p) = R^{tau,g}(s, p) + g^tau * sum_{s'} T^tau(s' | p, s) * U_bonus(s')
/// ```
///
/// Every full sequence extending `p` is worth at most `Q1(s, p)`.
pub fn announced_checkin_q(
    model: &PsoMdp,
    q_star: &QTable,
    tau: u32,
    capacity: &CapacityConfig,
) -> Result<QTable, SolverError> {
    let k = model.checkin_period();
    if tau == 0 || tau >= k {
        return Err(SolverError::BadOffset(tau));
    }
    let u_star = ValueTable(
        (0..q_star.num_states())
            .map(|s| q_star.best(s).map(|(_, v)| v).unwrap_or(f64::NEG_INFINITY))
            .collect(),
    );
    let bonus = unannounced_bonus_value(model, &u_star, tau, capacity)?;
    let prefixes = compose(model, tau, None, capacity)?;
    let gamma_prefix = model.discount().powi(tau as i32);
    let rows: Vec<Vec<(SeqId, f64)>> = (0..model.num_states())
        .into_par_iter()
        .map(|s| {
            prefixes
                .rows(s)
                .iter()
                .map(|row| {
                    let mut expect = 0.0;
                    for &(succ, p) in &row.succs {
                        expect += p * bonus.get(succ as usize);
                    }
                    (row.seq, row.reward + gamma_prefix * expect)
                })
                .collect()
        })
        .collect();
    Ok(QTable::new(tau, rows))
}

/// Composes the full period and solves it: the baseline exact solver.
pub fn solve_naive(
    model: &PsoMdp,
    config: &SolverConfig,
    capacity: &CapacityConfig,
) -> Result<Solution, SolverError> {
    let k = model.checkin_period();
    let composed = compose(model, k, None, capacity)?;
    let gamma_step = model.discount().powi(k as i32);
    value_iteration(&composed, None, gamma_step, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParts;

    fn single_loop_model(gamma: f64) -> PsoMdp {
        PsoMdp::validate(ModelParts {
            num_states: 1,
            num_actions: 1,
            transitions: vec![vec![vec![(0, 1.0)]]],
            rewards: vec![vec![1.0]],
            checkin_period: 1,
            discount: gamma,
            nop_action: None,
        })
        .unwrap()
    }

    /// Three-cell corridor to an absorbing goal: moving right from cell 2
    /// pays 1 and lands in the sink (state 3). Action 1 stays put.
    fn corridor_model(k: u32, gamma: f64) -> PsoMdp {
        let right = |s: usize| vec![(s + 1, 1.0)];
        PsoMdp::validate(ModelParts {
            num_states: 4,
            num_actions: 2,
            transitions: vec![
                vec![right(0), vec![(0, 1.0)]],
                vec![right(1), vec![(1, 1.0)]],
                vec![right(2), vec![(2, 1.0)]],
                vec![vec![(3, 1.0)], vec![(3, 1.0)]],
            ],
            rewards: vec![
                vec![0.0, 0.0],
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 0.0],
            ],
            checkin_period: k,
            discount: gamma,
            nop_action: Some(1),
        })
        .unwrap()
    }

    #[test]
    fn zero_rewards_solve_to_zero() {
        let model = PsoMdp::validate(ModelParts {
            num_states: 2,
            num_actions: 2,
            transitions: vec![
                vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]],
                vec![vec![(0, 1.0)], vec![(0, 0.3), (1, 0.7)]],
            ],
            rewards: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            checkin_period: 2,
            discount: 0.9,
            nop_action: None,
        })
        .unwrap();
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        assert_eq!(solution.values.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn geometric_series_value() {
        let model = single_loop_model(0.5);
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        assert!((solution.values.get(0) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn corridor_matches_finite_horizon_expectation() {
        let model = corridor_model(2, 0.9);
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        // Frozen via oracle::finite_horizon_value on the solved policy with
        // gamma^(2H) < 1e-12 (the chain is deterministic: reward 0.9^2 from
        // the start cell, 0.9 one cell in, 1 adjacent to the goal).
        assert!((solution.values.get(0) - 0.81).abs() < 1e-9);
        assert!((solution.values.get(1) - 0.9).abs() < 1e-9);
        assert!((solution.values.get(2) - 1.0).abs() < 1e-9);
        assert!((solution.values.get(3) - 0.0).abs() < 1e-9);
        // Policy steps right toward the goal.
        assert_eq!(solution.policy[0].decode(2), vec![0, 0]);
        assert_eq!(solution.policy[2].decode(2)[0], 0);
    }

    #[test]
    fn residuals_are_non_increasing() {
        // Contraction: track residuals manually over sweeps.
        let model = corridor_model(2, 0.95);
        let composed = compose(&model, 2, None, &CapacityConfig::default()).unwrap();
        let gamma_step = 0.95f64 * 0.95;
        let mut values = vec![0.0; 4];
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let mut next = vec![0.0; 4];
            let mut residual: f64 = 0.0;
            for s in 0..4 {
                let mut best = f64::NEG_INFINITY;
                for row in composed.rows(s) {
                    let expect: f64 =
                        row.succs.iter().map(|&(succ, p)| p * values[succ as usize]).sum();
                    best = best.max(row.reward + gamma_step * expect);
                }
                residual = residual.max((best - values[s]).abs());
                next[s] = best;
            }
            assert!(residual <= last + 1e-15, "residual grew: {last} -> {residual}");
            last = residual;
            values = next;
        }
    }

    #[test]
    fn tie_break_prefers_smallest_code() {
        let q = QTable::new(
            1,
            vec![vec![
                (SeqId::new(1, 0), 1.0),
                (SeqId::new(1, 1), 1.0),
                (SeqId::new(1, 2), 0.5),
            ]],
        );
        let policy = extract_policy(&q, None).unwrap();
        assert_eq!(policy[0], SeqId::new(1, 0));
    }

    #[test]
    fn empty_action_set_is_an_error() {
        let model = corridor_model(2, 0.9);
        let composed = compose(&model, 2, None, &CapacityConfig::default()).unwrap();
        let sets = vec![vec![SeqId::new(2, 0)], vec![], vec![SeqId::new(2, 0)], vec![SeqId::new(2, 0)]];
        match value_iteration(&composed, Some(&sets), 0.81, &SolverConfig::default()) {
            Err(SolverError::NoActionsAvailable(1)) => {}
            other => panic!("expected NoActionsAvailable(1), got {other:?}"),
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let model = single_loop_model(0.99);
        let cfg = SolverConfig { max_iterations: 3, ..SolverConfig::default() };
        match solve_naive(&model, &cfg, &CapacityConfig::default()) {
            Err(SolverError::NonConvergence { iterations: 3, residual }) => {
                assert!(residual > 0.0);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn bonus_value_at_offset_zero_matches_solution() {
        let model = corridor_model(3, 0.9);
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        let bonus =
            unannounced_bonus_value(&model, &solution.values, 0, &CapacityConfig::default()).unwrap();
        for s in 0..4 {
            assert!(
                (bonus.get(s) - solution.values.get(s)).abs() < 1e-8,
                "offset-0 bonus should reproduce the solved values"
            );
        }
    }

    #[test]
    fn single_action_bonus_has_no_choice() {
        let model = single_loop_model(0.5);
        let model = model.with_period(3).unwrap();
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        let bonus =
            unannounced_bonus_value(&model, &solution.values, 1, &CapacityConfig::default()).unwrap();
        // Unique suffix (0,0): reward 1 + 0.5 and then 0.25 * U.
        let expected = 1.5 + 0.25 * solution.values.get(0);
        assert!((bonus.get(0) - expected).abs() < 1e-8);
    }

    #[test]
    fn announced_q_on_deterministic_single_action_model_telescopes() {
        let model = single_loop_model(0.5).with_period(3).unwrap();
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        let q1 = announced_checkin_q(&model, &solution.q, 1, &CapacityConfig::default()).unwrap();
        let full = solution.q.get(0, SeqId::new(3, 0)).unwrap();
        assert!((q1.get(0, SeqId::new(1, 0)).unwrap() - full).abs() < 1e-8);
    }
}
