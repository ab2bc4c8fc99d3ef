//! Multi-step transition and reward tables for action sequences.
//!
//! For a sequence `a = (a_0, ..., a_{t-1})` started in state `s`, the
//! composed transition `T^t(s' | a, s)` is the probability of ending in `s'`
//! after the whole sequence, and the composed reward `R^{t,g}(s, a)` is the
//! expected discounted reward accumulated inside the window:
//!
//! ```text
//! R^{t,g}(s, a) = sum_{d=0}^{t-1} g^d * E[ R(s_d, a_d) | s_0 = s ]
//! ```
//!
//! Both are built one step at a time: extending a length-`t` row by action
//! `a` pushes the state distribution through `T(., a, .)` and adds the
//! `g^t`-discounted expected immediate reward. [`compose`] runs the chain
//! from scratch; [`extend_composition`] advances an existing table by one
//! step, which is what the branch-and-bound solver does as it lengthens
//! surviving prefixes. The two paths share the same kernel and the same
//! fixed summation order (ascending intermediate state index), so their
//! outputs are bit-identical.
//!
//! The number of rows is `|S| * |A|^t` for a full composition, so tables for
//! long sequences are enormous; [`CapacityConfig`] caps the total number of
//! sparse entries and composition fails with
//! [`ComposeError::CapacityExceeded`] instead of exhausting memory.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{seq_pow, PsoMdp, SeqId, StateId};

/// Probability entries below this threshold are dropped after each
/// composition step and the row is renormalized, to keep long compositions
/// from filling in with denormal-scale noise.
pub const PROB_DROP_THRESHOLD: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("composed table would exceed the entry budget of {budget} sparse entries")]
    CapacityExceeded { budget: usize },
    #[error("state {state} has no length-{length} row for the prefix of sequence code {code}")]
    MissingPrefix { state: StateId, length: u32, code: u64 },
    #[error("composition length {requested} is outside 1..={max}")]
    BadLength { requested: u32, max: u32 },
    #[error("sequence set entry has length {got}, expected {want}")]
    WrongSeqLength { got: u32, want: u32 },
}

/// Memory budget for composed tables, counted in sparse entries.
#[derive(Debug, Clone)]
pub struct CapacityConfig {
    pub max_entries: usize,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        // 2 GiB at 16 bytes per sparse entry.
        CapacityConfig { max_entries: (2usize << 30) / 16 }
    }
}

/// One `(state, sequence)` row of a composed model.
#[derive(Debug, Clone)]
pub struct ComposedRow {
    pub seq: SeqId,
    /// Expected discounted reward accumulated over the sequence.
    pub reward: f64,
    /// Distribution over end states, sorted by state index.
    pub succs: Vec<(u32, f64)>,
}

/// Transition and reward tables for a set of equal-length action sequences.
///
/// Rows are grouped per source state and sorted by sequence code; the set of
/// sequences may differ between states (the branch-and-bound solver prunes
/// per state).
#[derive(Debug, Clone)]
pub struct ComposedModel {
    length: u32,
    discount: f64,
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<ComposedRow>>,
}

impl ComposedModel {
    /// The length-0 table: one empty-sequence row per state with the identity
    /// distribution and zero reward. Starting point for incremental
    /// extension.
    pub fn identity(model: &PsoMdp) -> ComposedModel {
        let rows = (0..model.num_states())
            .map(|s| {
                vec![ComposedRow {
                    seq: SeqId::EMPTY,
                    reward: 0.0,
                    succs: vec![(s as u32, 1.0)],
                }]
            })
            .collect();
        ComposedModel {
            length: 0,
            discount: model.discount(),
            num_states: model.num_states(),
            num_actions: model.num_actions(),
            rows,
        }
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn discount_used(&self) -> f64 {
        self.discount
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Rows for one source state, sorted by sequence code.
    pub fn rows(&self, state: StateId) -> &[ComposedRow] {
        &self.rows[state]
    }

    pub fn find_row(&self, state: StateId, seq: SeqId) -> Option<&ComposedRow> {
        let rows = &self.rows[state];
        rows.binary_search_by_key(&seq.code(), |r| r.seq.code())
            .ok()
            .map(|i| &rows[i])
    }

    /// Total number of rows across all states.
    pub fn row_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Total number of sparse successor entries.
    pub fn entry_count(&self) -> usize {
        self.rows
            .iter()
            .map(|rows| rows.iter().map(|r| r.succs.len()).sum::<usize>())
            .sum()
    }

    /// Drops every row whose sequence is not in `keep[state]` (sorted by
    /// code). Used after pruning.
    pub fn retain(&mut self, keep: &[Vec<SeqId>]) {
        for (rows, keep) in self.rows.iter_mut().zip(keep.iter()) {
            let mut keep_iter = keep.iter().peekable();
            rows.retain(|row| {
                while let Some(&&next) = keep_iter.peek() {
                    if next.code() < row.seq.code() {
                        keep_iter.next();
                    } else {
                        break;
                    }
                }
                matches!(keep_iter.peek(), Some(&&next) if next.code() == row.seq.code())
            });
        }
    }
}

enum SeqSets<'a> {
    /// Same sorted sequence set for every state.
    Uniform(&'a [SeqId]),
    /// One sorted sequence set per state.
    PerState(&'a [Vec<SeqId>]),
}

impl<'a> SeqSets<'a> {
    fn for_state(&self, s: StateId) -> &'a [SeqId] {
        match self {
            SeqSets::Uniform(set) => set,
            SeqSets::PerState(sets) => &sets[s],
        }
    }
}

/// Builds the composed model for sequences of length `tau` from scratch.
///
/// With `sequences = None`, all `|A|^tau` sequences are composed for every
/// state. With an explicit set, only those sequences (and, internally, their
/// prefixes) are built.
pub fn compose(
    model: &PsoMdp,
    tau: u32,
    sequences: Option<&[SeqId]>,
    capacity: &CapacityConfig,
) -> Result<ComposedModel, ComposeError> {
    if tau == 0 || tau > model.checkin_period() {
        return Err(ComposeError::BadLength { requested: tau, max: model.checkin_period() });
    }
    if let Some(seqs) = sequences {
        for seq in seqs {
            if seq.length() != tau {
                return Err(ComposeError::WrongSeqLength { got: seq.length(), want: tau });
            }
        }
    }

    let counter = AtomicUsize::new(0);
    let mut current = ComposedModel::identity(model);
    for step in 1..=tau {
        let stage_targets: Option<Vec<SeqId>> = sequences.map(|seqs| {
            if step == tau {
                let mut v = seqs.to_vec();
                v.sort_unstable_by_key(SeqId::code);
                v.dedup();
                v
            } else {
                let mut v: Vec<SeqId> =
                    seqs.iter().map(|s| s.prefix(step, model.num_actions())).collect();
                v.sort_unstable_by_key(SeqId::code);
                v.dedup();
                v
            }
        });
        let full: Vec<SeqId>;
        let targets = match &stage_targets {
            Some(v) => SeqSets::Uniform(v),
            None => {
                full = all_seqs(model.num_actions(), step);
                SeqSets::Uniform(&full)
            }
        };
        current = extend_impl(&current, model, &targets, capacity, &counter)?;
    }
    Ok(current)
}

/// Like [`compose`] but with a separate sequence set per state.
pub fn compose_per_state(
    model: &PsoMdp,
    tau: u32,
    sequences: &[Vec<SeqId>],
    capacity: &CapacityConfig,
) -> Result<ComposedModel, ComposeError> {
    if tau == 0 || tau > model.checkin_period() {
        return Err(ComposeError::BadLength { requested: tau, max: model.checkin_period() });
    }
    for seqs in sequences {
        for seq in seqs {
            if seq.length() != tau {
                return Err(ComposeError::WrongSeqLength { got: seq.length(), want: tau });
            }
        }
    }
    let counter = AtomicUsize::new(0);
    let mut current = ComposedModel::identity(model);
    let mut stage_sets: Vec<Vec<SeqId>>;
    for step in 1..=tau {
        if step == tau {
            stage_sets = sequences
                .iter()
                .map(|seqs| {
                    let mut v = seqs.clone();
                    v.sort_unstable_by_key(SeqId::code);
                    v.dedup();
                    v
                })
                .collect();
        } else {
            stage_sets = sequences
                .iter()
                .map(|seqs| {
                    let mut v: Vec<SeqId> =
                        seqs.iter().map(|s| s.prefix(step, model.num_actions())).collect();
                    v.sort_unstable_by_key(SeqId::code);
                    v.dedup();
                    v
                })
                .collect();
        }
        current = extend_impl(&current, model, &SeqSets::PerState(&stage_sets), capacity, &counter)?;
    }
    Ok(current)
}

/// Extends a length-`t` composed model by one action per sequence.
///
/// `allowed[state]` lists the length-`t+1` sequences wanted at that state;
/// each one's length-`t` prefix must already have a row in `prev`. Produces
/// exactly what [`compose`] produces for the same sets.
pub fn extend_composition(
    prev: &ComposedModel,
    model: &PsoMdp,
    allowed: &[Vec<SeqId>],
    capacity: &CapacityConfig,
) -> Result<ComposedModel, ComposeError> {
    let want = prev.length() + 1;
    for seqs in allowed {
        for seq in seqs {
            if seq.length() != want {
                return Err(ComposeError::WrongSeqLength { got: seq.length(), want });
            }
        }
    }
    let counter = AtomicUsize::new(prev.entry_count());
    extend_impl(prev, model, &SeqSets::PerState(allowed), capacity, &counter)
}

fn all_seqs(num_actions: usize, length: u32) -> Vec<SeqId> {
    (0..seq_pow(num_actions, length)).map(|code| SeqId::new(length, code)).collect()
}

fn extend_impl(
    prev: &ComposedModel,
    model: &PsoMdp,
    targets: &SeqSets<'_>,
    capacity: &CapacityConfig,
    counter: &AtomicUsize,
) -> Result<ComposedModel, ComposeError> {
    let new_length = prev.length + 1;
    let gamma_pow = model.discount().powi(prev.length as i32);
    let num_actions = model.num_actions();

    let rows: Result<Vec<Vec<ComposedRow>>, ComposeError> = (0..prev.num_states)
        .into_par_iter()
        .map_init(
            || vec![0.0f64; prev.num_states],
            |scratch, s| {
                let want = targets.for_state(s);
                let prev_rows = &prev.rows[s];
                let mut out = Vec::with_capacity(want.len());
                for seq in want {
                    let parent_code = seq.prefix(new_length - 1, num_actions).code();
                    let idx = prev_rows
                        .binary_search_by_key(&parent_code, |r| r.seq.code())
                        .map_err(|_| ComposeError::MissingPrefix {
                            state: s,
                            length: new_length - 1,
                            code: parent_code,
                        })?;
                    let action = seq.action_at(new_length - 1, num_actions);
                    let row = extend_row(model, &prev_rows[idx], *seq, action, gamma_pow, scratch);
                    let total = counter.fetch_add(row.succs.len(), Ordering::Relaxed) + row.succs.len();
                    if total > capacity.max_entries {
                        return Err(ComposeError::CapacityExceeded { budget: capacity.max_entries });
                    }
                    out.push(row);
                }
                Ok(out)
            },
        )
        .collect();

    Ok(ComposedModel {
        length: new_length,
        discount: prev.discount,
        num_states: prev.num_states,
        num_actions: prev.num_actions,
        rows: rows?,
    })
}

/// One-step extension kernel. Accumulates into a dense scratch buffer,
/// reading the parent distribution in ascending state order, so the floating
/// summation order is fixed no matter how rows are scheduled across threads.
fn extend_row(
    model: &PsoMdp,
    parent: &ComposedRow,
    seq: SeqId,
    action: usize,
    gamma_pow: f64,
    scratch: &mut [f64],
) -> ComposedRow {
    let mut touched: Vec<u32> = Vec::with_capacity(parent.succs.len() + 4);
    let mut reward_term = 0.0;
    for &(mid, p) in &parent.succs {
        reward_term += p * model.reward(mid as usize, action);
        for &(succ, q) in model.successors(mid as usize, action) {
            let cell = &mut scratch[succ as usize];
            if *cell == 0.0 {
                touched.push(succ);
            }
            *cell += p * q;
        }
    }
    touched.sort_unstable();

    let mut succs = Vec::with_capacity(touched.len());
    let mut dropped = false;
    for &succ in &touched {
        let p = scratch[succ as usize];
        scratch[succ as usize] = 0.0;
        if p < PROB_DROP_THRESHOLD {
            dropped = true;
        } else {
            succs.push((succ, p));
        }
    }
    if dropped {
        let sum: f64 = succs.iter().map(|&(_, p)| p).sum();
        for entry in &mut succs {
            entry.1 /= sum;
        }
    }

    ComposedRow { seq, reward: parent.reward + gamma_pow * reward_term, succs }
}
