//! PSO-MDP data model and action-sequence encoding.
//!
//! [`PsoMdp`] is the 5-tuple (states, actions, transitions, rewards,
//! check-in period) plus a discount factor and an optional no-op action.
//! Transition rows are sparse successor lists; rewards are dense. A model is
//! only obtainable through [`PsoMdp::validate`], after which it is immutable,
//! so every downstream computation can assume stochastic rows and in-range
//! indices.
//!
//! [`SeqId`] identifies an action sequence by its length and a base-`|A|`
//! code, little-endian: the first action of the sequence is the least
//! significant digit. Prefix extraction is a modulo, appending an action is a
//! multiply-add, which keeps sequence bookkeeping O(1) and makes codes usable
//! as dense table keys.

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Tolerance for the per-row probability sum check.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

pub type StateId = usize;
pub type ActionId = usize;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transition row ({state}, {action}) sums to {sum} (must be 1 within {ROW_SUM_TOLERANCE})")]
    NonStochasticRow { state: StateId, action: ActionId, sum: f64 },
    #[error("index {index} out of range ({limit} {kind})")]
    BadIndex { kind: &'static str, index: usize, limit: usize },
    #[error("duplicate successor {successor} in transition row ({state}, {action})")]
    DuplicateSuccessor { state: StateId, action: ActionId, successor: StateId },
    #[error("probability {value} in transition row ({state}, {action}) is outside [0, 1]")]
    BadProbability { state: StateId, action: ActionId, value: f64 },
    #[error("state {0} violates the no-op contract (stay with probability one, zero reward)")]
    BadNop(StateId),
    #[error("discount factor {0} is outside [0, 1)")]
    BadDiscount(f64),
    #[error("check-in period must be at least 1")]
    BadPeriod,
    #[error("reward at ({state}, {action}) is not finite")]
    NonFiniteReward { state: StateId, action: ActionId },
    #[error("model must have at least one state and one action")]
    Empty,
    #[error("transition/reward tables do not match the declared dimensions")]
    ShapeMismatch,
    #[error("|A|^k = {num_actions}^{period} does not fit in a sequence code")]
    PeriodTooLarge { num_actions: usize, period: u32 },
}

/// Raw model data as assembled by a generator or parsed from JSON.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub num_states: usize,
    pub num_actions: usize,
    /// `transitions[s][a]` lists `(successor, probability)` pairs.
    pub transitions: Vec<Vec<Vec<(StateId, f64)>>>,
    /// `rewards[s][a]` is the immediate reward for taking `a` in `s`.
    pub rewards: Vec<Vec<f64>>,
    pub checkin_period: u32,
    pub discount: f64,
    pub nop_action: Option<ActionId>,
}

/// A validated periodically state-observed MDP.
///
/// Successor lists are stored sorted by state index with zero-probability
/// entries removed; all summations over them therefore run in a fixed order,
/// which keeps every computation in this crate reproducible across thread
/// counts.
#[derive(Debug, Clone)]
pub struct PsoMdp {
    num_states: usize,
    num_actions: usize,
    /// Sparse successor rows, indexed by `s * num_actions + a`.
    transitions: Vec<Vec<(u32, f64)>>,
    /// Dense rewards, indexed by `s * num_actions + a`.
    rewards: Vec<f64>,
    checkin_period: u32,
    discount: f64,
    nop_action: Option<ActionId>,
}

impl PsoMdp {
    /// Checks all model invariants and freezes the data.
    ///
    /// Rows must sum to 1 within [`ROW_SUM_TOLERANCE`], successor indices
    /// must be valid and unique, the discount must lie in `[0, 1)`, and a
    /// declared no-op action must keep every state in place with probability
    /// one at zero reward.
    pub fn validate(parts: ModelParts) -> Result<Self, ModelError> {
        let ModelParts {
            num_states,
            num_actions,
            transitions,
            rewards,
            checkin_period,
            discount,
            nop_action,
        } = parts;

        if num_states == 0 || num_actions == 0 {
            return Err(ModelError::Empty);
        }
        if checkin_period == 0 {
            return Err(ModelError::BadPeriod);
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(ModelError::BadDiscount(discount));
        }
        if checked_seq_capacity(num_actions, checkin_period).is_none() {
            return Err(ModelError::PeriodTooLarge { num_actions, period: checkin_period });
        }
        if let Some(nop) = nop_action {
            if nop >= num_actions {
                return Err(ModelError::BadIndex { kind: "actions", index: nop, limit: num_actions });
            }
        }
        if transitions.len() != num_states || rewards.len() != num_states {
            return Err(ModelError::ShapeMismatch);
        }

        let mut rows = Vec::with_capacity(num_states * num_actions);
        let mut reward_table = Vec::with_capacity(num_states * num_actions);
        for (s, (row_group, reward_group)) in transitions.iter().zip(rewards.iter()).enumerate() {
            if row_group.len() != num_actions || reward_group.len() != num_actions {
                return Err(ModelError::ShapeMismatch);
            }
            for (a, entries) in row_group.iter().enumerate() {
                let reward = reward_group[a];
                if !reward.is_finite() {
                    return Err(ModelError::NonFiniteReward { state: s, action: a });
                }
                let mut row: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
                let mut sum = 0.0;
                for &(succ, p) in entries {
                    if succ >= num_states {
                        return Err(ModelError::BadIndex { kind: "states", index: succ, limit: num_states });
                    }
                    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                        return Err(ModelError::BadProbability { state: s, action: a, value: p });
                    }
                    if p == 0.0 {
                        continue;
                    }
                    row.push((succ as u32, p));
                    sum += p;
                }
                row.sort_unstable_by_key(|&(succ, _)| succ);
                for pair in row.windows(2) {
                    if pair[0].0 == pair[1].0 {
                        return Err(ModelError::DuplicateSuccessor {
                            state: s,
                            action: a,
                            successor: pair[0].0 as StateId,
                        });
                    }
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(ModelError::NonStochasticRow { state: s, action: a, sum });
                }
                rows.push(row);
                reward_table.push(reward);
            }
        }

        let model = PsoMdp {
            num_states,
            num_actions,
            transitions: rows,
            rewards: reward_table,
            checkin_period,
            discount,
            nop_action,
        };

        if let Some(nop) = nop_action {
            for s in 0..num_states {
                let row = model.successors(s, nop);
                let stays = row.len() == 1 && row[0].0 as usize == s && (row[0].1 - 1.0).abs() <= ROW_SUM_TOLERANCE;
                if !stays || model.reward(s, nop) != 0.0 {
                    return Err(ModelError::BadNop(s));
                }
            }
        }

        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn checkin_period(&self) -> u32 {
        self.checkin_period
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn nop_action(&self) -> Option<ActionId> {
        self.nop_action
    }

    /// Sparse successor row for `(state, action)`, sorted by state index.
    pub fn successors(&self, state: StateId, action: ActionId) -> &[(u32, f64)] {
        &self.transitions[state * self.num_actions + action]
    }

    pub fn reward(&self, state: StateId, action: ActionId) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    /// Number of distinct action sequences of length `len`.
    pub fn seq_count(&self, len: u32) -> u64 {
        checked_seq_capacity(self.num_actions, len).expect("validated period bounds sequence codes")
    }

    /// Rebuilds the model with a different check-in period.
    pub fn with_period(&self, checkin_period: u32) -> Result<PsoMdp, ModelError> {
        if checkin_period == 0 {
            return Err(ModelError::BadPeriod);
        }
        if checked_seq_capacity(self.num_actions, checkin_period).is_none() {
            return Err(ModelError::PeriodTooLarge { num_actions: self.num_actions, period: checkin_period });
        }
        let mut model = self.clone();
        model.checkin_period = checkin_period;
        Ok(model)
    }

    /// Rebuilds the model with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<PsoMdp, ModelError> {
        if !(0.0..1.0).contains(&discount) {
            return Err(ModelError::BadDiscount(discount));
        }
        let mut model = self.clone();
        model.discount = discount;
        Ok(model)
    }

    /// Hash of the full model contents (dynamics, rewards, discount, period).
    pub fn content_hash(&self) -> String {
        self.hash_impl(true)
    }

    /// Hash of everything except the check-in period, for telling apart
    /// models that share dynamics but check in at different strides.
    pub fn layout_hash(&self) -> String {
        self.hash_impl(false)
    }

    fn hash_impl(&self, include_period: bool) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"psomdp-model-v1");
        hasher.update((self.num_states as u64).to_le_bytes());
        hasher.update((self.num_actions as u64).to_le_bytes());
        if include_period {
            hasher.update(self.checkin_period.to_le_bytes());
        }
        hasher.update(self.discount.to_bits().to_le_bytes());
        let nop = self.nop_action.map_or(u64::MAX, |a| a as u64);
        hasher.update(nop.to_le_bytes());
        for row in &self.transitions {
            hasher.update((row.len() as u64).to_le_bytes());
            for &(succ, p) in row {
                hasher.update(succ.to_le_bytes());
                hasher.update(p.to_bits().to_le_bytes());
            }
        }
        for &r in &self.rewards {
            hasher.update(r.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn checked_seq_capacity(num_actions: usize, len: u32) -> Option<u64> {
    let base = u64::try_from(num_actions).ok()?;
    base.checked_pow(len)
}

/// `num_actions^exp`, assuming the model validated that it fits.
pub(crate) fn seq_pow(num_actions: usize, exp: u32) -> u64 {
    (num_actions as u64).pow(exp)
}

/// Identifier of an action sequence: a length and a base-`|A|` code with the
/// first action in the least significant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeqId {
    length: u32,
    code: u64,
}

impl SeqId {
    /// The empty sequence.
    pub const EMPTY: SeqId = SeqId { length: 0, code: 0 };

    pub fn new(length: u32, code: u64) -> SeqId {
        SeqId { length, code }
    }

    /// Encodes a list of action indices.
    pub fn encode(actions: &[ActionId], num_actions: usize) -> Result<SeqId, ModelError> {
        let mut code = 0u64;
        let base = num_actions as u64;
        for (i, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(ModelError::BadIndex { kind: "actions", index: a, limit: num_actions });
            }
            let place = base
                .checked_pow(i as u32)
                .ok_or(ModelError::PeriodTooLarge { num_actions, period: actions.len() as u32 })?;
            code += a as u64 * place;
        }
        Ok(SeqId { length: actions.len() as u32, code })
    }

    /// Decodes back into action indices; inverse of [`SeqId::encode`].
    pub fn decode(&self, num_actions: usize) -> Vec<ActionId> {
        let base = num_actions as u64;
        let mut code = self.code;
        (0..self.length)
            .map(|_| {
                let digit = (code % base) as ActionId;
                code /= base;
                digit
            })
            .collect()
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    /// Action at position `i` (0 = first executed).
    pub fn action_at(&self, i: u32, num_actions: usize) -> ActionId {
        debug_assert!(i < self.length);
        ((self.code / seq_pow(num_actions, i)) % num_actions as u64) as ActionId
    }

    /// The length-`len` prefix, i.e. the low `len` digits.
    pub fn prefix(&self, len: u32, num_actions: usize) -> SeqId {
        debug_assert!(len <= self.length);
        SeqId { length: len, code: self.code % seq_pow(num_actions, len) }
    }

    /// Appends one action at the end of the sequence.
    pub fn append(&self, action: ActionId, num_actions: usize) -> SeqId {
        debug_assert!(action < num_actions);
        SeqId {
            length: self.length + 1,
            code: self.code + action as u64 * seq_pow(num_actions, self.length),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state_parts() -> ModelParts {
        ModelParts {
            num_states: 2,
            num_actions: 2,
            transitions: vec![
                vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 1.0)]],
                vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            ],
            rewards: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            checkin_period: 2,
            discount: 0.9,
            nop_action: Some(1),
        }
    }

    #[test]
    fn validates_well_formed_model() {
        let model = PsoMdp::validate(two_state_parts()).unwrap();
        assert_eq!(model.num_states(), 2);
        assert_eq!(model.successors(0, 0), &[(0, 0.5), (1, 0.5)]);
        assert_eq!(model.reward(0, 0), 1.0);
    }

    #[test]
    fn rejects_non_stochastic_row() {
        let mut parts = two_state_parts();
        parts.transitions[0][0] = vec![(0, 0.5), (1, 0.4)];
        match PsoMdp::validate(parts) {
            Err(ModelError::NonStochasticRow { state: 0, action: 0, sum }) => {
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("expected NonStochasticRow, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_nop() {
        let mut parts = two_state_parts();
        // Declared no-op leaks probability to another state.
        parts.transitions[0][1] = vec![(0, 0.9), (1, 0.1)];
        match PsoMdp::validate(parts) {
            Err(ModelError::BadNop(0)) => {}
            other => panic!("expected BadNop(0), got {other:?}"),
        }
    }

    #[test]
    fn rejects_nop_with_reward() {
        let mut parts = two_state_parts();
        parts.rewards[1][1] = 0.25;
        assert!(matches!(PsoMdp::validate(parts), Err(ModelError::BadNop(1))));
    }

    #[test]
    fn rejects_bad_discount_and_indices() {
        let mut parts = two_state_parts();
        parts.discount = 1.0;
        assert!(matches!(PsoMdp::validate(parts), Err(ModelError::BadDiscount(_))));

        let mut parts = two_state_parts();
        parts.transitions[1][0] = vec![(2, 1.0)];
        assert!(matches!(PsoMdp::validate(parts), Err(ModelError::BadIndex { .. })));

        let mut parts = two_state_parts();
        parts.transitions[0][0] = vec![(1, 0.5), (1, 0.5)];
        assert!(matches!(PsoMdp::validate(parts), Err(ModelError::DuplicateSuccessor { .. })));
    }

    #[test]
    fn hash_distinguishes_period_but_layout_does_not() {
        let a = PsoMdp::validate(two_state_parts()).unwrap();
        let b = a.with_period(3).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.layout_hash(), b.layout_hash());
    }

    #[test]
    fn encode_examples() {
        assert_eq!(SeqId::encode(&[], 4).unwrap(), SeqId::new(0, 0));
        assert_eq!(SeqId::encode(&[2], 4).unwrap(), SeqId::new(1, 2));
        assert_eq!(SeqId::encode(&[1, 0, 3], 4).unwrap(), SeqId::new(3, 49));
        assert!(matches!(
            SeqId::encode(&[4], 4),
            Err(ModelError::BadIndex { index: 4, .. })
        ));
    }

    #[test]
    fn prefix_is_modulo() {
        let seq = SeqId::encode(&[1, 0, 3], 4).unwrap();
        assert_eq!(seq.prefix(2, 4), SeqId::encode(&[1, 0], 4).unwrap());
        assert_eq!(seq.prefix(0, 4), SeqId::EMPTY);
        assert_eq!(seq.action_at(2, 4), 3);
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(
            num_actions in 1usize..6,
            raw in proptest::collection::vec(0usize..6, 0..10),
        ) {
            let actions: Vec<ActionId> = raw.into_iter().map(|a| a % num_actions).collect();
            let seq = SeqId::encode(&actions, num_actions).unwrap();
            prop_assert!(seq.code() < seq_pow(num_actions, seq.length()));
            prop_assert_eq!(seq.decode(num_actions), actions.clone());
            // Appending digit by digit reproduces the same code.
            let mut built = SeqId::EMPTY;
            for &a in &actions {
                built = built.append(a, num_actions);
            }
            prop_assert_eq!(built, seq);
        }

        #[test]
        fn prefix_matches_decoded_slice(
            num_actions in 2usize..5,
            raw in proptest::collection::vec(0usize..5, 1..9),
            split in 0usize..9,
        ) {
            let actions: Vec<ActionId> = raw.into_iter().map(|a| a % num_actions).collect();
            let cut = split % (actions.len() + 1);
            let seq = SeqId::encode(&actions, num_actions).unwrap();
            let prefix = seq.prefix(cut as u32, num_actions);
            prop_assert_eq!(prefix.decode(num_actions), actions[..cut].to_vec());
        }
    }
}
