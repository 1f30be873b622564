//! Benchmark engine for serial (multi-echelon) supply-chain inventory management.
//!
//! The crate is organized around six modules:
//!
//! - [`env`] — the discrete-time environment: scenario specification, demand
//!   models, and the period-by-period dynamics (shipments, sales, backlogs,
//!   inventories, per-stage profit). Every other module that needs dynamics
//!   simulates through this one; there is no second implementation.
//! - [`policies`] — scripted ordering heuristics (base-stock, tracking-demand,
//!   safety-stock) and the deterministic demand forecast they share.
//! - [`memory`] — per-stage episodic stores of `(state, action, reward)`
//!   records with exact nearest-neighbour retrieval and a JSON Lines
//!   import/export format.
//! - [`optimal`] — the centralized-optimum solver: exact evaluation of order
//!   schedules, depth-first branch-and-bound with an admissible bound, a
//!   min-cost-flow root relaxation, and an integer-program (LP file) export.
//! - [`agents`] — the decision loop: prompt assembly from editable templates,
//!   scripted and remote (chat-completion HTTP) backends, retrieval-augmented
//!   episodes.
//! - [`harness`] — named benchmark scenarios, experiment runner, metrics
//!   (relative gap vs. the optimum), trace/series CSV emission, and rollout
//!   log recording.

// The dynamics, solver, and retrieval code walk stage/period grids where the
// same index addresses several arrays at once; explicit indices keep those
// loops aligned with the recurrences they implement.
#![allow(clippy::needless_range_loop)]

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod memory;
pub mod optimal;
pub mod policies;

pub use agents::{Backend, EpisodeResult, PromptBundle, RetrievalConfig, ScriptedPolicy};
pub use env::{DemandModel, EnvState, Observation, ScenarioSpec, StageParams, StepOutcome};
pub use error::{Error, ErrorKind, Result};
pub use harness::{AgentKind, MetricsReport, RunConfig, ScenarioRef};
pub use memory::{MemoryRecord, MemoryStore, RecordSource, SimilarCase};
pub use optimal::{OrderSchedule, SolveBudget, SolveResult, SolveStatus};
