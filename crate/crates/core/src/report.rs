//! Run accounting shared by every solver entry point.

use crate::cg::SolutionPool;

/// Work counters accumulated across one solver run.
///
/// `oracle_calls == seed_calls + lb_iterations + ub_iterations` always holds:
/// every oracle call either seeds an empty pool or closes one generation
/// iteration (bound-side or evaluation-side).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub oracle_calls: u64,
    /// Oracle calls spent seeding an empty pool with the nominal scenario.
    pub seed_calls: u64,
    /// Master problems solved, LP and MIP alike.
    pub master_solves: u64,
    /// Lower-bound generation runs started.
    pub lb_runs: u64,
    /// Generation iterations inside lower-bound runs.
    pub lb_iterations: u64,
    /// Exact first-stage evaluations started.
    pub ub_runs: u64,
    /// Generation iterations inside exact first-stage evaluations.
    pub ub_iterations: u64,
    /// Search nodes processed by branch & bound.
    pub nodes: u64,
    /// Scenario-expansion rounds.
    pub ccg_iterations: u64,
}

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn absorb(&mut self, other: &Counters) {
        self.oracle_calls += other.oracle_calls;
        self.seed_calls += other.seed_calls;
        self.master_solves += other.master_solves;
        self.lb_runs += other.lb_runs;
        self.lb_iterations += other.lb_iterations;
        self.ub_runs += other.ub_runs;
        self.ub_iterations += other.ub_iterations;
        self.nodes += other.nodes;
        self.ccg_iterations += other.ccg_iterations;
    }

    /// Checks the call-accounting identity; solvers assert this on exit.
    pub fn balanced(&self) -> bool {
        self.oracle_calls == self.seed_calls + self.lb_iterations + self.ub_iterations
    }

    /// Mean generation iterations per lower-bound run.
    pub fn mean_lb_iterations(&self) -> f64 {
        if self.lb_runs == 0 {
            0.0
        } else {
            self.lb_iterations as f64 / self.lb_runs as f64
        }
    }

    /// Mean generation iterations per exact evaluation.
    pub fn mean_ub_iterations(&self) -> f64 {
        if self.ub_runs == 0 {
            0.0
        } else {
            self.ub_iterations as f64 / self.ub_runs as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Optimal,
    Infeasible,
    LimitReached,
}

/// Outcome of a full solve, always in the problem's native objective sense.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub status: RunStatus,
    /// Exact worst-case value of `best_x`; absent when no incumbent exists.
    pub objective: Option<f64>,
    /// Proven bound on the true optimum: a lower bound when minimizing, an
    /// upper bound when maximizing.
    pub bound: Option<f64>,
    /// The bound obtained at the root before any branching or expansion.
    pub root_bound: Option<f64>,
    pub best_x: Option<Vec<bool>>,
    /// Scenario certifying `objective` as the worst case for `best_x`.
    pub worst_scenario: Option<Vec<f64>>,
    /// Recourse assignments backing the incumbent, kept for policy-quality
    /// metrics downstream.
    pub policy: Option<SolutionPool>,
    pub counters: Counters,
}

impl RunReport {
    pub fn infeasible(counters: Counters) -> Self {
        RunReport {
            status: RunStatus::Infeasible,
            objective: None,
            bound: None,
            root_bound: None,
            best_x: None,
            worst_scenario: None,
            policy: None,
            counters,
        }
    }

    /// Absolute gap between incumbent and proven bound, when both exist.
    pub fn gap(&self) -> Option<f64> {
        match (self.objective, self.bound) {
            (Some(o), Some(b)) => Some((o - b).abs()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorb_adds_componentwise() {
        let mut a = Counters { oracle_calls: 2, seed_calls: 1, lb_iterations: 1, ..Counters::new() };
        let b = Counters { oracle_calls: 3, ub_iterations: 3, nodes: 4, ..Counters::new() };
        a.absorb(&b);
        assert_eq!(a.oracle_calls, 5);
        assert_eq!(a.seed_calls, 1);
        assert_eq!(a.lb_iterations, 1);
        assert_eq!(a.ub_iterations, 3);
        assert_eq!(a.nodes, 4);
    }

    #[test]
    fn balance_tracks_the_call_identity() {
        let mut c = Counters::new();
        assert!(c.balanced());
        c.oracle_calls = 3;
        c.seed_calls = 1;
        c.lb_iterations = 2;
        assert!(c.balanced());
        c.ub_iterations = 1;
        assert!(!c.balanced());
    }

    #[test]
    fn gap_needs_both_sides() {
        let mut r = RunReport::infeasible(Counters::new());
        assert_eq!(r.gap(), None);
        r.objective = Some(3.0);
        r.bound = Some(2.5);
        assert!((r.gap().unwrap() - 0.5).abs() < 1e-12);
    }
}
