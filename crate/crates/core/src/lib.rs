//! Exact solver library for periodically state-observed Markov decision
//! processes (PSO-MDPs).
//!
//! A PSO-MDP is a finite MDP whose state is revealed to the agent only every
//! `k` steps. Between these periodic check-ins the agent runs open-loop, so a
//! decision is a length-`k` sequence of atomic actions committed at the last
//! observation. The crate provides:
//!
//! - [`model`]: the validated model type and sequence encoding.
//! - [`compose`]: multi-step transition/reward tables for action sequences,
//!   built from scratch or extended incrementally one step at a time.
//! - [`solver`]: value iteration over sequence actions, plus the value of
//!   mid-period state revelations (announced or not).
//! - [`bounds`]: families of upper bounds from extra check-in schedules and
//!   lower bounds from suffix-restricted action sets.
//! - [`bnb`]: a branch-and-bound solver that grows action prefixes, prunes
//!   the ones whose upper bound falls below the lower bound, and finishes
//!   with an exact solve over the survivors.
//! - [`domains`]: grid-world generators and the model JSON format.
//! - [`oracle`]: deliberately naive reference implementations used to verify
//!   everything else.

pub mod bnb;
pub mod bounds;
pub mod compose;
pub mod domains;
pub mod model;
pub mod oracle;
pub mod solver;

pub use compose::{CapacityConfig, ComposeError, ComposedModel};
pub use model::{ModelError, ModelParts, PsoMdp, SeqId};
pub use solver::{QTable, Solution, SolverConfig, SolverError, ValueTable};
