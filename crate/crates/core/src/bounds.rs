//! Upper and lower bounds on sequence-action values.
//!
//! # Upper bounds from extra check-ins
//!
//! Giving the agent *more* state revelations can only help, so the value of
//! a process with extra check-ins upper-bounds the original value. A
//! schedule is described by a set `B` of strides: after each revelation the
//! agent picks a stride `l` from `B`, commits to `l` actions, and is told
//! its state again, with strides always composing to whole periods of `k`.
//! The resulting coupled fixed point is indexed by the *offset* `m` — the
//! number of steps left until the next regularly scheduled check-in, with
//! `m = 0` standing for a full period ahead:
//!
//! ```text
//! Qbar_[m](s, a) = min_{l in B, l admissible at m} ( R^{l,g}(s, a_{0:l})
//!                    + g^l * sum_{s'} T^l(s' | a_{0:l}, s) * max_{a'} Qbar_[m-l](s', a') )
//! ```
//!
//! The min makes the family as tight as the schedule allows: any single
//! admissible stride already yields an upper bound. Offsets that cannot be
//! both reached from a check-in and continued down to zero never participate
//! and are not materialized; [`check_composable`] computes that lattice.
//!
//! When `B = {l}` with `l` dividing `k`, every table in the family collapses
//! to a single function over length-`l` prefixes, which is just the MDP on
//! the same states with `|A|^l` actions ([`upper_bound_divisor`]). The
//! extreme case `l = 1` is the omniscient relaxation: full observability at
//! every step ([`omniscient_values`]).
//!
//! # Lower bounds from fixed suffixes
//!
//! Restricting each decision to sequences that end in a fixed suffix `z` of
//! length `k - tau` yields a feasible policy and therefore a lower bound on
//! state values ([`lower_bound_suffix`]). For models with a no-op action the
//! natural suffix is "do nothing": act for `tau` steps, then idle until the
//! next check-in. Because the no-op keeps the state fixed at zero reward,
//! the `k`-step tables of such sequences equal the `tau`-step tables of
//! their prefixes, so the suffix is never actually composed.

use rayon::prelude::*;
use thiserror::Error;

use crate::compose::{compose, compose_per_state, CapacityConfig, ComposeError, ComposedModel};
use crate::model::{seq_pow, ActionId, PsoMdp, SeqId, StateId};
use crate::solver::{value_iteration, QTable, SolverConfig, SolverError, ValueTable};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("check-in stride set must not be empty")]
    EmptySet,
    #[error("check-in stride {0} is outside [1, {1})")]
    StrideOutOfRange(u32, u32),
    #[error("stride {failing} cannot be extended by strides in the set to reach the period {period}")]
    NonComposable { failing: u32, period: u32 },
    #[error("{0} does not divide the check-in period {1}")]
    NotADivisor(u32, u32),
    #[error("prefix length {0} is outside 1..={1}")]
    BadPrefixLength(u32, u32),
    #[error("model has no designated no-op action")]
    NopUnavailable,
    #[error("suffix has length {got}, expected {want}")]
    BadSuffixLength { got: usize, want: usize },
    #[error("suffix action {action} is out of range for {num_actions} actions")]
    BadSuffixAction { action: ActionId, num_actions: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// Decides whether every stride in `members` can be extended by further
/// strides from the set (repetition allowed) to sum exactly to `period`.
///
/// Also returns the offset lattice: the offsets `m` in `[0, period)` that
/// are both reachable from a regular check-in (i.e. `period - m` is a sum of
/// strides) and able to count down to the next one (`m` is a sum of
/// strides). These are exactly the offsets a bound family materializes.
pub fn check_composable(members: &[u32], period: u32) -> (bool, Vec<u32>) {
    let k = period as usize;
    let mut reachable = vec![false; k + 1];
    reachable[0] = true;
    for v in 1..=k {
        reachable[v] = members
            .iter()
            .any(|&l| (l as usize) <= v && reachable[v - l as usize]);
    }
    let composable = !members.is_empty()
        && members.iter().all(|&l| l <= period && reachable[(period - l) as usize]);
    let offsets = (0..period)
        .filter(|&m| reachable[m as usize] && reachable[(period - m) as usize])
        .collect();
    (composable, offsets)
}

/// A validated set of extra check-in strides for a period `k`.
#[derive(Debug, Clone)]
pub struct CheckinSet {
    period: u32,
    members: Vec<u32>,
    offsets: Vec<u32>,
}

impl CheckinSet {
    pub fn new(members: &[u32], period: u32) -> Result<CheckinSet, BoundsError> {
        if members.is_empty() {
            return Err(BoundsError::EmptySet);
        }
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &l in &sorted {
            if l == 0 || l >= period {
                return Err(BoundsError::StrideOutOfRange(l, period));
            }
        }
        let (ok, offsets) = check_composable(&sorted, period);
        if !ok {
            let k = period as usize;
            let mut reach = vec![false; k + 1];
            reach[0] = true;
            for v in 1..=k {
                reach[v] =
                    sorted.iter().any(|&b| (b as usize) <= v && reach[v - b as usize]);
            }
            let failing =
                *sorted.iter().find(|&&l| !reach[(period - l) as usize]).unwrap_or(&sorted[0]);
            return Err(BoundsError::NonComposable { failing, period });
        }
        Ok(CheckinSet { period, members: sorted, offsets })
    }

    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    /// The materialized offset lattice, ascending; always contains 0.
    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }
}

/// How the fixed suffix of a lower bound is produced.
#[derive(Debug, Clone)]
pub enum SuffixSpec {
    /// Repeat the model's no-op action.
    NopRepeat,
    /// Repeat one fixed action.
    ActionRepeat(ActionId),
    /// An explicit suffix; its length must be `k - tau`.
    Explicit(Vec<ActionId>),
}

impl SuffixSpec {
    fn resolve(&self, model: &PsoMdp, len: usize) -> Result<Vec<ActionId>, BoundsError> {
        let actions = match self {
            SuffixSpec::NopRepeat => {
                let nop = model.nop_action().ok_or(BoundsError::NopUnavailable)?;
                vec![nop; len]
            }
            SuffixSpec::ActionRepeat(a) => vec![*a; len],
            SuffixSpec::Explicit(actions) => {
                if actions.len() != len {
                    return Err(BoundsError::BadSuffixLength { got: actions.len(), want: len });
                }
                actions.clone()
            }
        };
        for &a in &actions {
            if a >= model.num_actions() {
                return Err(BoundsError::BadSuffixAction {
                    action: a,
                    num_actions: model.num_actions(),
                });
            }
        }
        Ok(actions)
    }
}

/// The family of per-offset upper-bound Q-tables produced by
/// [`upper_bound_general`].
#[derive(Debug, Clone)]
pub struct BoundFamily {
    checkins: CheckinSet,
    /// `(offset, table)` pairs, ascending by offset. The offset-0 table is
    /// keyed by full-length sequences; an offset-`m` table by length-`m`
    /// prefixes.
    tables: Vec<(u32, QTable)>,
}

impl BoundFamily {
    pub fn checkins(&self) -> &CheckinSet {
        &self.checkins
    }

    pub fn tables(&self) -> &[(u32, QTable)] {
        &self.tables
    }

    pub fn table(&self, offset: u32) -> Option<&QTable> {
        self.tables.iter().find(|(m, _)| *m == offset).map(|(_, t)| t)
    }
}

/// Per-state prefix restriction: all sets must share one prefix length.
type PrefixSets<'a> = &'a [Vec<SeqId>];

/// Solves the upper-bound family for an arbitrary composable stride set.
///
/// With `prefix_restriction`, the sequences considered everywhere are those
/// extending (or prefixing) the given per-state sets, which is how a
/// branch-and-bound caller narrows the bound to surviving prefixes.
pub fn upper_bound_general(
    model: &PsoMdp,
    checkins: &CheckinSet,
    config: &SolverConfig,
    capacity: &CapacityConfig,
    prefix_restriction: Option<PrefixSets<'_>>,
) -> Result<BoundFamily, BoundsError> {
    let k = model.checkin_period();
    assert_eq!(checkins.period(), k, "check-in set built for a different period");
    let num_states = model.num_states();
    let num_actions = model.num_actions();
    let offsets = checkins.offsets().to_vec();

    let restriction_len = match prefix_restriction {
        None => None,
        Some(sets) => {
            let mut len = None;
            for (s, set) in sets.iter().enumerate() {
                if set.is_empty() {
                    return Err(BoundsError::Solver(SolverError::NoActionsAvailable(s)));
                }
                for seq in set {
                    match len {
                        None => len = Some(seq.length()),
                        Some(l) if l == seq.length() => {}
                        Some(l) => {
                            return Err(BoundsError::Compose(ComposeError::WrongSeqLength {
                                got: seq.length(),
                                want: l,
                            }))
                        }
                    }
                }
            }
            let len = len.unwrap_or(0);
            if len == 0 || len > k {
                return Err(BoundsError::BadPrefixLength(len, k));
            }
            Some(len)
        }
    };

    // Keys of the offset-m table for a state: sequences of length m (or k at
    // offset 0), narrowed by the restriction when present.
    let keys_for = |s: StateId, m_eff: u32| -> Vec<SeqId> {
        match (prefix_restriction, restriction_len) {
            (Some(sets), Some(len)) if len > 0 => {
                if m_eff <= len {
                    let mut v: Vec<SeqId> =
                        sets[s].iter().map(|seq| seq.prefix(m_eff, num_actions)).collect();
                    v.sort_unstable_by_key(SeqId::code);
                    v.dedup();
                    v
                } else {
                    let mut v = Vec::with_capacity(
                        sets[s].len() * seq_pow(num_actions, m_eff - len) as usize,
                    );
                    for ext in 0..seq_pow(num_actions, m_eff - len) {
                        for p in &sets[s] {
                            v.push(SeqId::new(m_eff, p.code() + ext * seq_pow(num_actions, len)));
                        }
                    }
                    v
                }
            }
            _ => (0..seq_pow(num_actions, m_eff)).map(|c| SeqId::new(m_eff, c)).collect(),
        }
    };

    // Admissible strides per offset, with the follow-up offset index.
    let moves: Vec<Vec<(u32, usize)>> = offsets
        .iter()
        .map(|&m| {
            let m_eff = if m == 0 { k } else { m };
            checkins
                .members()
                .iter()
                .filter_map(|&l| {
                    if l > m_eff {
                        return None;
                    }
                    let next = m_eff - l;
                    let next = if next == k { 0 } else { next };
                    offsets.binary_search(&next).ok().map(|idx| (l, idx))
                })
                .collect()
        })
        .collect();
    debug_assert!(moves.iter().all(|mv| !mv.is_empty()));

    // One composition per stride. The stride-length prefixes of every key
    // that can occur are exactly the length-l key sets themselves.
    let mut stride_rows: Vec<ComposedModel> = Vec::with_capacity(checkins.members().len());
    for &l in checkins.members() {
        let per_state: Vec<Vec<SeqId>> = (0..num_states).map(|s| keys_for(s, l)).collect();
        stride_rows.push(compose_per_state(model, l, &per_state, capacity)?);
    }
    let stride_index =
        |l: u32| checkins.members().iter().position(|&b| b == l).expect("stride in set");

    // Materialize keys once.
    let keys: Vec<Vec<Vec<SeqId>>> = offsets
        .iter()
        .map(|&m| {
            let m_eff = if m == 0 { k } else { m };
            (0..num_states).map(|s| keys_for(s, m_eff)).collect()
        })
        .collect();
    for per_state in &keys {
        for (s, ks) in per_state.iter().enumerate() {
            if ks.is_empty() {
                return Err(BoundsError::Solver(SolverError::NoActionsAvailable(s)));
            }
        }
    }

    let gamma = model.discount();
    let eval_key = |mi: usize, s: StateId, key: SeqId, v: &[Vec<f64>]| -> f64 {
        let mut best = f64::INFINITY;
        for &(l, next_idx) in &moves[mi] {
            let row = stride_rows[stride_index(l)]
                .find_row(s, key.prefix(l, num_actions))
                .expect("stride prefix composed");
            let mut expect = 0.0;
            for &(succ, p) in &row.succs {
                expect += p * v[next_idx][succ as usize];
            }
            let q = row.reward + gamma.powi(l as i32) * expect;
            if q < best {
                best = q;
            }
        }
        best
    };

    // Synchronous iteration over all offsets at once, one global residual.
    let mut v: Vec<Vec<f64>> = offsets.iter().map(|_| vec![0.0; num_states]).collect();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < config.max_iterations {
        iterations += 1;
        let next: Vec<Vec<f64>> = (0..offsets.len())
            .map(|mi| {
                (0..num_states)
                    .into_par_iter()
                    .map(|s| {
                        let mut best = f64::NEG_INFINITY;
                        for &key in &keys[mi][s] {
                            let q = eval_key(mi, s, key, &v);
                            if q > best {
                                best = q;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect();
        residual = next
            .iter()
            .zip(v.iter())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= config.tolerance {
            break;
        }
    }
    if residual > config.tolerance {
        return Err(BoundsError::Solver(SolverError::NonConvergence { iterations, residual }));
    }

    let tables = offsets
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let m_eff = if m == 0 { k } else { m };
            let rows: Vec<Vec<(SeqId, f64)>> = (0..num_states)
                .into_par_iter()
                .map(|s| keys[mi][s].iter().map(|&key| (key, eval_key(mi, s, key, &v))).collect())
                .collect();
            (m, QTable::new(m_eff, rows))
        })
        .collect();

    Ok(BoundFamily { checkins: checkins.clone(), tables })
}

/// Upper bound for a single stride `ell` dividing the period: the MDP over
/// length-`ell` action sequences. `Qbar(s, p)` bounds the value of every
/// full sequence whose first `ell` actions are `p`.
pub fn upper_bound_divisor(
    model: &PsoMdp,
    ell: u32,
    config: &SolverConfig,
    capacity: &CapacityConfig,
    prefix_restriction: Option<PrefixSets<'_>>,
) -> Result<QTable, BoundsError> {
    let k = model.checkin_period();
    if ell == 0 || !k.is_multiple_of(ell) {
        return Err(BoundsError::NotADivisor(ell, k));
    }
    let composed = match prefix_restriction {
        None => compose(model, ell, None, capacity)?,
        Some(sets) => compose_per_state(model, ell, sets, capacity)?,
    };
    let solution = value_iteration(&composed, None, model.discount().powi(ell as i32), config)?;
    Ok(solution.q)
}

/// Value of the omniscient relaxation: the agent observes its state at every
/// step. Dominates the value of the periodically observed process for every
/// period.
pub fn omniscient_values(
    model: &PsoMdp,
    config: &SolverConfig,
    capacity: &CapacityConfig,
) -> Result<ValueTable, BoundsError> {
    let composed = compose(model, 1, None, capacity)?;
    let solution = value_iteration(&composed, None, model.discount(), config)?;
    Ok(solution.values)
}

/// Lower bound from optimizing length-`tau` prefixes over a fixed suffix.
///
/// Returns the Q-table keyed by the prefixes (the suffix is implicit) and
/// the per-state value of the restricted process, which never exceeds the
/// true optimal value. All-no-op suffixes skip suffix composition entirely:
/// idling neither moves the state nor pays reward, so the `tau`-step rows
/// already are the `k`-step rows of the suffixed sequences.
pub fn lower_bound_suffix(
    model: &PsoMdp,
    tau: u32,
    suffix: &SuffixSpec,
    config: &SolverConfig,
    capacity: &CapacityConfig,
    prefix_restriction: Option<PrefixSets<'_>>,
) -> Result<(QTable, ValueTable), BoundsError> {
    let k = model.checkin_period();
    if tau == 0 || tau > k {
        return Err(BoundsError::BadPrefixLength(tau, k));
    }
    let suffix_actions = suffix.resolve(model, (k - tau) as usize)?;

    let prefixes = match prefix_restriction {
        None => compose(model, tau, None, capacity)?,
        Some(sets) => compose_per_state(model, tau, sets, capacity)?,
    };

    let is_nop_suffix = match model.nop_action() {
        Some(nop) => suffix_actions.iter().all(|&a| a == nop),
        None => suffix_actions.is_empty(),
    };
    let solution = if is_nop_suffix {
        value_iteration(&prefixes, None, model.discount().powi(k as i32), config)?
    } else {
        let mut table = prefixes;
        let num_actions = model.num_actions();
        for &a in &suffix_actions {
            let allowed: Vec<Vec<SeqId>> = (0..model.num_states())
                .map(|s| table.rows(s).iter().map(|r| r.seq.append(a, num_actions)).collect())
                .collect();
            table = crate::compose::extend_composition(&table, model, &allowed, capacity)?;
        }
        let solution = value_iteration(&table, None, model.discount().powi(k as i32), config)?;
        // Re-key the full sequences back to their prefixes.
        let rows: Vec<Vec<(SeqId, f64)>> = (0..model.num_states())
            .map(|s| {
                solution
                    .q
                    .entries(s)
                    .iter()
                    .map(|&(seq, v)| (seq.prefix(tau, num_actions), v))
                    .collect()
            })
            .collect();
        return Ok((QTable::new(tau, rows), solution.values));
    };
    Ok((solution.q, solution.values))
}
