//! Deliberately naive reference implementations.
//!
//! Everything here is written for auditability, not speed, and shares no
//! composition or sweep code with the optimized modules: multi-step tables
//! come from literal path enumeration, policy values from dense forward
//! propagation, and simulation from a hand-rolled portable generator. These
//! are the yardsticks the rest of the crate is tested against.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{PsoMdp, SeqId, StateId};
use crate::solver::{QTable, SolveStats, Solution, SolverConfig, ValueTable};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for dense enumeration: {entries} entries exceed {limit}")]
    TooLarge { entries: u128, limit: u128 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

/// Dense-enumeration guard for [`brute_force_solve`].
const MAX_DENSE_ENTRIES: u128 = 10_000_000;

/// Exact solve by full enumeration.
///
/// Builds the `k`-step transition and reward tables by walking every state
/// path under every action sequence, then runs a dense synchronous value
/// iteration. Exponential in the check-in period on purpose.
pub fn brute_force_solve(model: &PsoMdp, config: &SolverConfig) -> Result<Solution, OracleError> {
    let start = std::time::Instant::now();
    let k = model.checkin_period();
    let num_states = model.num_states();
    let num_seqs = model.seq_count(k) as usize;
    let entries = num_states as u128 * num_seqs as u128;
    if entries > MAX_DENSE_ENTRIES {
        return Err(OracleError::TooLarge { entries, limit: MAX_DENSE_ENTRIES });
    }

    // transition[s * num_seqs + c][s'] and reward[s * num_seqs + c].
    let mut transition = vec![vec![0.0f64; num_states]; num_states * num_seqs];
    let mut reward = vec![0.0f64; num_states * num_seqs];
    for s in 0..num_states {
        for code in 0..num_seqs {
            let actions = SeqId::new(k, code as u64).decode(model.num_actions());
            let idx = s * num_seqs + code;
            walk_paths(model, s, 0, 1.0, &actions, &mut transition[idx], &mut reward[idx]);
        }
    }

    let gamma_step = model.discount().powi(k as i32);
    let mut values = vec![0.0f64; num_states];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut next = vec![f64::NEG_INFINITY; num_states];
        for (s, best) in next.iter_mut().enumerate() {
            for code in 0..num_seqs {
                let idx = s * num_seqs + code;
                let mut expect = 0.0;
                for (succ, &p) in transition[idx].iter().enumerate() {
                    expect += p * values[succ];
                }
                let q = reward[idx] + gamma_step * expect;
                if q > *best {
                    *best = q;
                }
            }
        }
        residual = values
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if residual <= config.tolerance {
            break;
        }
    }
    if residual > config.tolerance {
        return Err(OracleError::NonConvergence { iterations, residual });
    }

    let mut q_rows = Vec::with_capacity(num_states);
    let mut final_values = Vec::with_capacity(num_states);
    let mut policy = Vec::with_capacity(num_states);
    for s in 0..num_states {
        let mut row = Vec::with_capacity(num_seqs);
        let mut best = f64::NEG_INFINITY;
        let mut best_seq = SeqId::new(k, 0);
        for code in 0..num_seqs {
            let idx = s * num_seqs + code;
            let mut expect = 0.0;
            for (succ, &p) in transition[idx].iter().enumerate() {
                expect += p * values[succ];
            }
            let q = reward[idx] + gamma_step * expect;
            row.push((SeqId::new(k, code as u64), q));
            if q > best {
                best = q;
                best_seq = SeqId::new(k, code as u64);
            }
        }
        q_rows.push(row);
        final_values.push(best);
        policy.push(best_seq);
    }

    Ok(Solution {
        q: QTable::new(k, q_rows),
        values: ValueTable(final_values),
        policy,
        stats: SolveStats {
            iterations,
            residual,
            seconds: start.elapsed().as_secs_f64(),
            composed_entries: num_states * num_seqs * num_states,
        },
    })
}

/// Depth-first walk over all state paths under a fixed action list,
/// accumulating the end-state distribution and the discounted reward of
/// every visited node.
fn walk_paths(
    model: &PsoMdp,
    state: StateId,
    depth: usize,
    prob: f64,
    actions: &[usize],
    end_dist: &mut [f64],
    reward: &mut f64,
) {
    let action = actions[depth];
    *reward += prob * model.discount().powi(depth as i32) * model.reward(state, action);
    if depth + 1 == actions.len() {
        for &(succ, p) in model.successors(state, action) {
            end_dist[succ as usize] += prob * p;
        }
        return;
    }
    for &(succ, p) in model.successors(state, action) {
        walk_paths(model, succ as usize, depth + 1, prob * p, actions, end_dist, reward);
    }
}

/// Exact truncated policy value by forward distribution propagation.
///
/// Runs `horizon_periods` whole periods of the policy from a point mass at
/// `start` and returns the expected discounted reward collected, which is
/// within `max |R| * gamma^(k * horizon_periods) / (1 - gamma)` of the
/// infinite-horizon policy value.
pub fn finite_horizon_value(
    model: &PsoMdp,
    policy: &[SeqId],
    start: StateId,
    horizon_periods: u32,
) -> f64 {
    let num_states = model.num_states();
    let k = model.checkin_period();
    let gamma = model.discount();
    let mut at_checkin = vec![0.0f64; num_states];
    at_checkin[start] = 1.0;
    let mut total = 0.0;
    for period in 0..horizon_periods {
        let mut next_checkin = vec![0.0f64; num_states];
        for s in 0..num_states {
            let mass = at_checkin[s];
            if mass == 0.0 {
                continue;
            }
            let actions = policy[s].decode(model.num_actions());
            let mut dist = vec![0.0f64; num_states];
            dist[s] = mass;
            for (step, &a) in actions.iter().enumerate() {
                let t = period * k + step as u32;
                let mut gain = 0.0;
                let mut pushed = vec![0.0f64; num_states];
                for (mid, &p) in dist.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    gain += p * model.reward(mid, a);
                    for &(succ, q) in model.successors(mid, a) {
                        pushed[succ as usize] += p * q;
                    }
                }
                total += gamma.powi(t as i32) * gain;
                dist = pushed;
            }
            for (succ, &p) in dist.iter().enumerate() {
                next_checkin[succ] += p;
            }
        }
        at_checkin = next_checkin;
    }
    total
}

/// SplitMix64: state advances by the golden-gamma constant and the output is
/// finalized with two xor-multiply rounds. Stable across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    /// Independent substream for an episode index: the seed is advanced by
    /// `(index + 1)` golden-gamma steps and finalized once, so episode
    /// streams never overlap for practical episode counts.
    pub fn substream(seed: u64, index: u64) -> SplitMix64 {
        let z = seed.wrapping_add((index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        SplitMix64 { state: mix64(z) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

fn mix64(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte-Carlo estimate of the discounted return of a policy.
///
/// Episode `i` draws from `SplitMix64::substream(seed, i)`, so results are
/// bit-identical for a fixed seed regardless of thread count or platform.
/// Returns the sample mean and its standard error.
pub fn simulate_policy(
    model: &PsoMdp,
    policy: &[SeqId],
    start: StateId,
    episodes: u64,
    horizon_periods: u32,
    seed: u64,
) -> (f64, f64) {
    let returns: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|episode| {
            let mut rng = SplitMix64::substream(seed, episode);
            let mut state = start;
            let mut value = 0.0;
            let mut t = 0i32;
            for _ in 0..horizon_periods {
                let actions = policy[state].decode(model.num_actions());
                for &a in &actions {
                    value += model.discount().powi(t) * model.reward(state, a);
                    state = sample_successor(model, state, a, rng.next_f64());
                    t += 1;
                }
            }
            value
        })
        .collect();

    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    if returns.len() < 2 {
        return (mean, 0.0);
    }
    let var = returns.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_successor(model: &PsoMdp, state: StateId, action: usize, u: f64) -> StateId {
    let row = model.successors(state, action);
    let mut acc = 0.0;
    for &(succ, p) in row {
        acc += p;
        if u < acc {
            return succ as usize;
        }
    }
    row.last().expect("validated rows are non-empty").0 as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::CapacityConfig;
    use crate::model::ModelParts;
    use crate::solver::solve_naive;

    fn seeded_model(seed: u64, num_states: usize, num_actions: usize, k: u32) -> PsoMdp {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for _ in 0..num_states {
            let mut per_action = Vec::new();
            let mut reward_row = Vec::new();
            for _ in 0..num_actions {
                let weights: Vec<f64> = (0..num_states).map(|_| next() + 1e-3).collect();
                let total: f64 = weights.iter().sum();
                per_action.push(
                    weights.iter().enumerate().map(|(j, w)| (j, w / total)).collect::<Vec<_>>(),
                );
                reward_row.push(next());
            }
            transitions.push(per_action);
            rewards.push(reward_row);
        }
        PsoMdp::validate(ModelParts {
            num_states,
            num_actions,
            transitions,
            rewards,
            checkin_period: k,
            discount: 0.9,
            nop_action: None,
        })
        .unwrap()
    }

    #[test]
    fn brute_force_agrees_with_optimized_solver() {
        // Tight tolerance so both routes land on the same fixed point well
        // below the comparison threshold.
        let cfg = SolverConfig { tolerance: 1e-12, ..SolverConfig::default() };
        for seed in 0..100u64 {
            let num_states = 2 + (seed % 4) as usize; // 2..=5
            let num_actions = 2 + (seed % 2) as usize; // 2..=3
            let k = 1 + (seed % 3) as u32; // 1..=3
            let model = seeded_model(seed, num_states, num_actions, k);
            let brute = brute_force_solve(&model, &cfg).unwrap();
            let fast = solve_naive(&model, &cfg, &CapacityConfig::default()).unwrap();
            for s in 0..num_states {
                assert!(
                    (brute.values.get(s) - fast.values.get(s)).abs() < 1e-9,
                    "seed {seed}: state {s}: {} vs {}",
                    brute.values.get(s),
                    fast.values.get(s)
                );
            }
        }
    }

    #[test]
    fn zero_reward_model_solves_to_zero() {
        let model = PsoMdp::validate(ModelParts {
            num_states: 2,
            num_actions: 2,
            transitions: vec![
                vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]],
                vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            ],
            rewards: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            checkin_period: 2,
            discount: 0.9,
            nop_action: None,
        })
        .unwrap();
        let solution = brute_force_solve(&model, &SolverConfig::default()).unwrap();
        assert_eq!(solution.values.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn unit_period_chain_has_geometric_value() {
        let model = PsoMdp::validate(ModelParts {
            num_states: 1,
            num_actions: 1,
            transitions: vec![vec![vec![(0, 1.0)]]],
            rewards: vec![vec![1.0]],
            checkin_period: 1,
            discount: 0.5,
            nop_action: None,
        })
        .unwrap();
        let solution = brute_force_solve(&model, &SolverConfig::default()).unwrap();
        assert!((solution.values.get(0) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn size_guard_triggers() {
        let model = seeded_model(1, 12, 4, 12);
        assert!(matches!(
            brute_force_solve(&model, &SolverConfig::default()),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn finite_horizon_basics() {
        let model = PsoMdp::validate(ModelParts {
            num_states: 1,
            num_actions: 1,
            transitions: vec![vec![vec![(0, 1.0)]]],
            rewards: vec![vec![1.0]],
            checkin_period: 1,
            discount: 0.5,
            nop_action: None,
        })
        .unwrap();
        let policy = vec![SeqId::new(1, 0)];
        assert_eq!(finite_horizon_value(&model, &policy, 0, 0), 0.0);
        let v = finite_horizon_value(&model, &policy, 0, 20);
        assert!((v - 2.0).abs() < 2e-6, "truncated geometric sum: {v}");
    }

    #[test]
    fn finite_horizon_matches_solved_grid_value() {
        let model = crate::domains::build_gridworld(
            &crate::domains::builtin("benchmark_4x7").unwrap(),
        )
        .unwrap();
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        let k = model.checkin_period();
        let gamma = model.discount();
        let horizon = 45u32;
        let tail_bound = gamma.powi((k * horizon) as i32) / (1.0 - gamma);
        assert!(tail_bound < 2.5e-3);
        let v = finite_horizon_value(&model, &solution.policy, 0, horizon);
        assert!(
            (v - solution.values.get(0)).abs() <= tail_bound,
            "propagated {v} vs solved {}",
            solution.values.get(0)
        );
    }

    #[test]
    fn simulation_is_deterministic_and_exact_on_deterministic_models() {
        let model = PsoMdp::validate(ModelParts {
            num_states: 2,
            num_actions: 1,
            transitions: vec![vec![vec![(1, 1.0)]], vec![vec![(1, 1.0)]]],
            rewards: vec![vec![1.0]
                , vec![0.0]],
            checkin_period: 1,
            discount: 0.5,
            nop_action: None,
        })
        .unwrap();
        let policy = vec![SeqId::new(1, 0); 2];
        let (mean_a, se_a) = simulate_policy(&model, &policy, 0, 100, 10, 7);
        let (mean_b, se_b) = simulate_policy(&model, &policy, 0, 100, 10, 7);
        assert_eq!(mean_a.to_bits(), mean_b.to_bits());
        assert_eq!(se_a.to_bits(), se_b.to_bits());
        assert_eq!(se_a, 0.0, "deterministic model has zero variance");
        assert!((mean_a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simulation_matches_propagated_value_on_stochastic_model() {
        let model = seeded_model(5, 4, 2, 2);
        let solution = solve_naive(&model, &SolverConfig::default(), &CapacityConfig::default()).unwrap();
        let exact = finite_horizon_value(&model, &solution.policy, 0, 60);
        let (mean, se) = simulate_policy(&model, &solution.policy, 0, 20_000, 60, 42);
        assert!(
            (mean - exact).abs() <= 3.5 * se.max(1e-6),
            "mean {mean} vs exact {exact} (se {se})"
        );
    }
}
