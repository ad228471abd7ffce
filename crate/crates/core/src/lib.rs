//! Solvers for binary two-stage robust optimization with objective
//! uncertainty.
//!
//! The decision model: pick a binary first stage `x`, an adversary picks a
//! cost vector `c` from a polyhedral uncertainty set, then a binary second
//! stage `y` reacts. Objectives are bilinear in the scenario,
//! `f(x, y, c) = g(x, y) + c . h(x, y)`, so every algorithm here only ever
//! touches solutions through their cached `(g, h)` pairs.
//!
//! Layers, bottom up:
//! - [`lp`]: dense bounded-variable primal simplex (two-phase, deterministic).
//! - [`mip`]: branch & bound over binary variables on top of [`lp`].
//! - [`model`]: problem/oracle contracts, scenarios, uncertainty sets.
//! - [`cg`]: column-generation lower bound over a growing solution pool.
//! - [`bnb`]: branch & bound on first-stage variables driven by [`cg`].
//! - [`ccg`]: column-and-constraint generation on a scenario list.
//! - [`problems`]: hub location, capital budgeting, explicit toy instances.
//! - [`bench`]: brute-force reference solver, scenario sampling, gap metrics.
//! - [`report`]: run counters and result summaries shared by the solvers.

pub mod bench;
pub mod bnb;
pub mod ccg;
pub mod cg;
pub mod error;
pub mod lp;
pub mod mip;
pub mod model;
pub mod problems;
pub mod report;

pub use error::{Error, Result};
pub use model::{FixationSet, Oracle, Problem, Scenario, Sense, Solution, UncertaintySet};
pub use report::{Counters, RunReport, RunStatus};
