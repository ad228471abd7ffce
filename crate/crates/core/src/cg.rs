//! Scenario generation against a growing pool of assignments.
//!
//! The master problem picks the scenario that maximizes the minimum cost
//! over the pooled assignments; the oracle then answers with the best
//! assignment under that scenario. The loop closes when the oracle cannot
//! beat the master value by more than the tolerance. With the first stage
//! only partially pinned this yields a valid lower bound on the robust
//! optimum; with every first-stage variable pinned it evaluates the
//! worst-case cost of that first stage exactly.
//!
//! Everything in this module works in minimize sense; wrap maximize
//! problems in `Canonical` before building oracles.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, INF, NEG_INF};
use crate::model::{FixationSet, Oracle, Scenario, Solution, UncertaintySet};
use crate::report::Counters;

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Convergence slack: stop once the oracle response is within this of
    /// the master value.
    pub tolerance: f64,
    /// Members costing more than the final master value plus this slack
    /// under the final scenario are dropped from the pool.
    pub purge_slack: f64,
    /// Hard cap; the loop provably terminates on finite assignment sets,
    /// so hitting this is an error, not a soft stop.
    pub max_iterations: u64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tolerance: 1e-6, purge_slack: 1e-6, max_iterations: 100_000 }
    }
}

/// Ordered, duplicate-free collection of assignments.
#[derive(Clone, Debug, Default)]
pub struct SolutionPool {
    members: Vec<Solution>,
}

impl SolutionPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_members(members: Vec<Solution>) -> Self {
        let mut pool = Self::new();
        for m in members {
            pool.push(m);
        }
        pool
    }

    /// Appends unless an identical assignment is already pooled.
    pub fn push(&mut self, sol: Solution) -> bool {
        if self.members.iter().any(|m| m.same_assignment(&sol)) {
            return false;
        }
        self.members.push(sol);
        true
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Solution] {
        &self.members
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Solution> {
        self.members.iter()
    }

    /// Copy of the pool restricted to members compatible with `fix`.
    pub fn filtered(&self, fix: &FixationSet) -> SolutionPool {
        SolutionPool {
            members: self.members.iter().filter(|m| fix.admits(&m.x)).cloned().collect(),
        }
    }

    /// Componentwise mean of the members' first stages.
    pub fn first_stage_frequency(&self) -> Vec<f64> {
        assert!(!self.members.is_empty(), "frequency of an empty pool");
        let n = self.members[0].x.len();
        let mut avg = vec![0.0; n];
        for m in &self.members {
            for (a, &b) in avg.iter_mut().zip(&m.x) {
                *a += if b { 1.0 } else { 0.0 };
            }
        }
        let k = self.members.len() as f64;
        avg.iter_mut().for_each(|a| *a /= k);
        avg
    }

    /// Convex combination of the members' first stages under `weights`.
    pub fn weighted_first_stage(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.members.len(), "weight per member");
        assert!(!self.members.is_empty(), "average of an empty pool");
        let n = self.members[0].x.len();
        let mut avg = vec![0.0; n];
        for (m, &w) in self.members.iter().zip(weights) {
            for (a, &b) in avg.iter_mut().zip(&m.x) {
                *a += if b { w } else { 0.0 };
            }
        }
        avg
    }

    /// Up to `k` distinct first stages, most frequent first, ties by first
    /// appearance.
    pub fn most_frequent_first_stages(&self, k: usize) -> Vec<Vec<bool>> {
        let mut seen: Vec<(Vec<bool>, usize, usize)> = Vec::new();
        for (idx, m) in self.members.iter().enumerate() {
            match seen.iter_mut().find(|(x, _, _)| x == &m.x) {
                Some((_, count, _)) => *count += 1,
                None => seen.push((m.x.clone(), 1, idx)),
            }
        }
        seen.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        seen.into_iter().take(k).map(|(x, _, _)| x).collect()
    }

    fn retain_by_mask(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.members.retain(|_| *it.next().unwrap());
    }
}

/// Scenario choice maximizing the minimum pooled cost, with the convex
/// weights the pool members receive at the optimum.
#[derive(Clone, Debug)]
pub struct MasterSolution {
    pub value: f64,
    pub scenario: Scenario,
    /// One weight per pool member, nonnegative, summing to one.
    pub weights: Vec<f64>,
}

/// Maximizes `min_z (base_z + h_z . c)` over the scenario set. The weights
/// come from the duals of the member rows; the variable coupling them is
/// free, so they sum to one.
pub fn solve_master(pool: &SolutionPool, set: &UncertaintySet) -> Result<MasterSolution> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("master needs a nonempty pool".into()));
    }
    let p = set.deviation_dim();
    let (lo, hi) = set.deviation_bounds();
    let mut lp = LpProblem::new();
    let mu = lp.push_var(1.0, NEG_INF, INF);
    let delta: Vec<usize> = (0..p).map(|k| lp.push_var(0.0, lo[k], hi[k])).collect();
    for z in pool.iter() {
        // mu <= base + h.nominal + (P^T h) . delta
        let ph = set.map().apply_transpose(&z.scenario_cost);
        let mut coefs = vec![(mu, 1.0)];
        coefs.extend(
            ph.iter()
                .enumerate()
                .filter(|&(_, &a)| a != 0.0)
                .map(|(k, &a)| (delta[k], -a)),
        );
        let rhs = z.base_cost + dot(&z.scenario_cost, set.nominal());
        lp.push_row(coefs, Relation::Le, rhs);
    }
    for (coefs, b) in set.rows() {
        let sparse: Vec<(usize, f64)> = coefs
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a != 0.0)
            .map(|(k, &a)| (delta[k], a))
            .collect();
        lp.push_row(sparse, Relation::Le, *b);
    }
    let r = solve_lp(&lp)?;
    match r.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Invariant("scenario set became infeasible in the master".into()))
        }
        LpStatus::Unbounded => {
            return Err(Error::Invariant("master unbounded over a bounded scenario box".into()))
        }
        LpStatus::Stalled => return Err(Error::Numerical("master simplex stalled".into())),
    }
    let dvals: Vec<f64> = delta.iter().map(|&j| r.primal[j]).collect();
    let scenario = set.realize(&dvals);
    debug_assert!(set.contains(&scenario, 1e-5), "master scenario left the set");
    let mut weights: Vec<f64> = r.duals[..pool.len()].to_vec();
    let raw_sum: f64 = weights.iter().sum();
    debug_assert!((raw_sum - 1.0).abs() <= 1e-5, "member duals sum to {raw_sum}");
    for w in &mut weights {
        *w = w.max(0.0);
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.5 {
        return Err(Error::Numerical("degenerate master duals".into()));
    }
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(MasterSolution { value: r.objective, scenario, weights })
}

/// One converged generation run.
#[derive(Clone, Debug)]
pub struct CgRun {
    /// Final master value: the lower bound, or the exact worst-case cost
    /// when the first stage was fully pinned.
    pub value: f64,
    /// Scenario attaining the final master value.
    pub scenario: Scenario,
    /// Convex weights aligned with the (purged) pool.
    pub weights: Vec<f64>,
    pub iterations: u64,
}

/// Lower bound on the robust optimum restricted to first stages admitted by
/// `fix`. Seeds an empty pool from the nominal scenario, then alternates
/// master and oracle until converged; the pool is left purged of members
/// that were strictly worse than the final master value. `None` means no
/// admitted first stage is feasible.
pub fn lower_bound(
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    fix: &FixationSet,
    pool: &mut SolutionPool,
    opts: &CgOptions,
    counters: &mut Counters,
) -> Result<Option<CgRun>> {
    generate(set, oracle, fix, pool, opts, counters, false)
}

/// Exact worst-case cost of one fully pinned first stage.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    /// Worst-case scenario certifying `value`.
    pub scenario: Scenario,
    /// Assignments generated along the way, purged to the binding ones.
    pub pool: SolutionPool,
    pub weights: Vec<f64>,
}

impl Evaluation {
    /// Pool member attaining the minimum under the final scenario.
    pub fn best_response(&self) -> &Solution {
        let mut best = &self.pool.members()[0];
        let mut bv = best.value(&self.scenario);
        for m in self.pool.iter().skip(1) {
            let v = m.value(&self.scenario);
            if v < bv {
                best = m;
                bv = v;
            }
        }
        best
    }
}

/// Runs the generation loop with every first-stage variable pinned to `x`,
/// which makes the converged value the exact worst-case cost of `x`.
/// `hint` members matching `x` warm-start the pool. `None` means `x` has no
/// feasible recourse.
pub fn evaluate_first_stage(
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    x: &[bool],
    hint: &SolutionPool,
    opts: &CgOptions,
    counters: &mut Counters,
) -> Result<Option<Evaluation>> {
    let fix = FixationSet::pin_all(x);
    let mut pool = hint.filtered(&fix);
    let run = generate(set, oracle, &fix, &mut pool, opts, counters, true)?;
    Ok(run.map(|r| Evaluation { value: r.value, scenario: r.scenario, pool, weights: r.weights }))
}

fn generate(
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    fix: &FixationSet,
    pool: &mut SolutionPool,
    opts: &CgOptions,
    counters: &mut Counters,
    count_as_upper: bool,
) -> Result<Option<CgRun>> {
    debug_assert!(
        pool.iter().all(|m| fix.admits(&m.x)),
        "pool member contradicts the fixation set"
    );
    if count_as_upper {
        counters.ub_runs += 1;
    } else {
        counters.lb_runs += 1;
    }
    if pool.is_empty() {
        counters.oracle_calls += 1;
        counters.seed_calls += 1;
        match oracle.solve(&set.nominal_scenario(), fix)? {
            Some(seed) => {
                debug_assert!(fix.admits(&seed.x));
                pool.push(seed);
            }
            None => return Ok(None),
        }
    }
    let mut iterations = 0u64;
    loop {
        let master = solve_master(pool, set)?;
        counters.master_solves += 1;
        let response = oracle.solve(&master.scenario, fix)?;
        counters.oracle_calls += 1;
        if count_as_upper {
            counters.ub_iterations += 1;
        } else {
            counters.lb_iterations += 1;
        }
        iterations += 1;
        let sol = response
            .ok_or_else(|| Error::Invariant("oracle lost feasibility with a nonempty pool".into()))?;
        if sol.value(&master.scenario) >= master.value - opts.tolerance {
            return Ok(Some(finish(pool, master, iterations, opts)));
        }
        if !pool.push(sol) {
            // A repeated member can never cost less than the master value.
            return Err(Error::Invariant("oracle repeated a pooled assignment below the master value".into()));
        }
        if iterations >= opts.max_iterations {
            return Err(Error::LimitReached(format!(
                "scenario generation still open after {iterations} iterations"
            )));
        }
    }
}

/// Purges non-binding members and renormalizes their weights.
fn finish(pool: &mut SolutionPool, master: MasterSolution, iterations: u64, opts: &CgOptions) -> CgRun {
    let keep: Vec<bool> = pool
        .iter()
        .map(|z| z.value(&master.scenario) <= master.value + opts.purge_slack)
        .collect();
    let mut weights: Vec<f64> = master
        .weights
        .iter()
        .zip(&keep)
        .filter(|&(_, &k)| k)
        .map(|(&w, _)| w)
        .collect();
    pool.retain_by_mask(&keep);
    debug_assert!(!pool.is_empty(), "purge removed the binding member");
    let sum: f64 = weights.iter().sum();
    debug_assert!(sum > 0.5, "purged members carried the dual mass");
    weights.iter_mut().for_each(|w| *w /= sum);
    CgRun { value: master.value, scenario: master.scenario, weights, iterations }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
