//! Branch & bound over the first-stage variables.
//!
//! Each node carries a fixation set and a warm-started pool; its bound is
//! the converged generation value under those fixations. Nodes are explored
//! best-first (smallest bound, FIFO among ties), branching on the
//! first-stage coordinate whose pool average sits closest to one half.
//! Incumbents come in three ways, tried in order: a node whose pool agrees
//! on one first stage is already exact; otherwise the rounded pool average
//! is evaluated when it is feasible; otherwise the most frequent pooled
//! first stages are evaluated directly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use crate::cg::{evaluate_first_stage, lower_bound, CgOptions, CgRun, SolutionPool};
use crate::error::{Error, Result};
use crate::model::{Canonical, FixationSet, Oracle, Problem, Scenario, UncertaintySet};
use crate::report::{Counters, RunReport, RunStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branching {
    /// Average the pool's first stages uniformly.
    PoolFrequency,
    /// Weight them by the master's optimal convex combination.
    OptimalWeights,
}

#[derive(Clone, Copy, Debug)]
pub struct BnbConfig {
    pub branching: Branching,
    /// Nodes within this of the incumbent are pruned; must be positive.
    pub gap_tolerance: f64,
    pub cg: CgOptions,
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Try the rounded pool average as an incumbent before falling back to
    /// evaluating pooled first stages.
    pub rounding_incumbents: bool,
    /// With 2 or more, the two child bounds of a branch are computed in
    /// parallel; results and reports stay identical to the sequential run.
    pub threads: usize,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            branching: Branching::OptimalWeights,
            gap_tolerance: 1e-6,
            cg: CgOptions::default(),
            node_limit: None,
            time_limit: None,
            rounding_incumbents: true,
            threads: 1,
        }
    }
}

struct Node {
    fix: FixationSet,
    pool: SolutionPool,
    run: CgRun,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq && self.run.value == other.run.value
    }
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Smallest bound pops first; FIFO among equal bounds.
        other
            .run
            .value
            .total_cmp(&self.run.value)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Incumbent {
    x: Vec<bool>,
    value: f64,
    scenario: Scenario,
    policy: SolutionPool,
}

type EvalCache = BTreeMap<Vec<bool>, Option<(f64, Scenario, SolutionPool)>>;

/// Solves the two-stage robust problem to within `gap_tolerance`. The
/// report is stated in the problem's native sense.
pub fn solve_bnb<P: Problem>(
    canon: &Canonical<P>,
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    config: &BnbConfig,
) -> Result<RunReport> {
    if !(config.gap_tolerance > 0.0) {
        return Err(Error::InvalidInput("gap tolerance must be positive".into()));
    }
    if config.threads == 0 {
        return Err(Error::InvalidInput("thread count must be at least 1".into()));
    }
    if set.scenario_dim() != canon.scenario_len() {
        return Err(Error::InvalidInput("scenario set dimension does not match the problem".into()));
    }
    let n1 = canon.first_stage_len();
    let started = Instant::now();
    let mut counters = Counters::new();

    let mut root_pool = SolutionPool::new();
    let root_run = lower_bound(set, oracle, &FixationSet::empty(), &mut root_pool, &config.cg, &mut counters)?;
    let Some(root_run) = root_run else {
        return Ok(RunReport::infeasible(counters));
    };
    counters.nodes = 1;
    let root_bound = root_run.value;

    let mut heap = BinaryHeap::new();
    heap.push(Node { fix: FixationSet::empty(), pool: root_pool, run: root_run, seq: 0 });
    let mut seq = 0u64;
    let mut incumbent: Option<Incumbent> = None;
    let mut cache = EvalCache::new();
    let mut status = RunStatus::Optimal;
    let mut last_popped = f64::NEG_INFINITY;

    while let Some(node) = heap.pop() {
        debug_assert!(
            node.run.value >= last_popped - 1e-9 * (1.0 + last_popped.abs()),
            "best-first pop order broke"
        );
        last_popped = node.run.value;
        if let Some(inc) = &incumbent {
            if node.run.value >= inc.value - config.gap_tolerance {
                // Smallest open bound cannot improve: the incumbent is proven.
                heap.clear();
                break;
            }
        }
        if config.node_limit.is_some_and(|cap| counters.nodes >= cap)
            || config.time_limit.is_some_and(|cap| started.elapsed() >= cap)
        {
            heap.push(node);
            status = RunStatus::LimitReached;
            break;
        }

        let x_bar = match config.branching {
            Branching::PoolFrequency => node.pool.first_stage_frequency(),
            Branching::OptimalWeights => node.pool.weighted_first_stage(&node.run.weights),
        };
        if let Some(cand) = propose_incumbent(&node, &x_bar, canon, set, oracle, config, &mut cache, &mut counters)? {
            if incumbent.as_ref().map_or(true, |inc| cand.value < inc.value) {
                incumbent = Some(cand);
            }
        }
        if let Some(inc) = &incumbent {
            if node.run.value >= inc.value - config.gap_tolerance {
                continue;
            }
        }

        let free: Vec<usize> = (0..n1).filter(|&i| !node.fix.is_fixed(i)).collect();
        if free.is_empty() {
            // A fully fixed node has a single-x pool, so the incumbent close
            // above must have caught it.
            return Err(Error::Invariant("fully fixed node survived its exact bound".into()));
        }
        let j = select_branch_var(&x_bar, &free);

        let children = [node.fix.child(j, false), node.fix.child(j, true)];
        let mut outcomes = expand(&node, children, set, oracle, &config.cg, config.threads)?;
        for (fix, pool, run, child_counters) in outcomes.drain(..) {
            counters.absorb(&child_counters);
            if let Some(run) = run {
                debug_assert!(
                    run.value >= node.run.value - config.cg.tolerance - 1e-9,
                    "child bound fell below its parent"
                );
                counters.nodes += 1;
                seq += 1;
                heap.push(Node { fix, pool, run, seq });
            }
        }
    }

    debug_assert!(counters.balanced(), "oracle call accounting drifted");
    let open_min = heap.iter().map(|n| n.run.value).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some(inc) => {
            let bound = match status {
                RunStatus::Optimal => inc.value,
                _ => open_min.min(inc.value),
            };
            Ok(RunReport {
                status,
                objective: Some(canon.to_native(inc.value)),
                bound: Some(canon.to_native(bound)),
                root_bound: Some(canon.to_native(root_bound)),
                best_x: Some(inc.x),
                worst_scenario: Some(inc.scenario.values().to_vec()),
                policy: Some(inc.policy),
                counters,
            })
        }
        None => {
            if status != RunStatus::LimitReached {
                return Err(Error::Invariant("search exhausted without an incumbent".into()));
            }
            Ok(RunReport {
                status,
                objective: None,
                bound: Some(canon.to_native(open_min)),
                root_bound: Some(canon.to_native(root_bound)),
                best_x: None,
                worst_scenario: None,
                policy: None,
                counters,
            })
        }
    }
}

/// Index among `free` whose average is closest to one half; ties go to the
/// lowest index. With a fully integral average this degenerates to the
/// lowest free index, keeping the search alive.
pub fn select_branch_var(x_bar: &[f64], free: &[usize]) -> usize {
    assert!(!free.is_empty(), "branching needs a free index");
    let mut best = free[0];
    let mut best_score = (x_bar[best] - 0.5).abs();
    for &i in &free[1..] {
        let score = (x_bar[i] - 0.5).abs();
        if score < best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

fn propose_incumbent<P: Problem>(
    node: &Node,
    x_bar: &[f64],
    canon: &Canonical<P>,
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    config: &BnbConfig,
    cache: &mut EvalCache,
    counters: &mut Counters,
) -> Result<Option<Incumbent>> {
    let members = node.pool.members();
    debug_assert!(!members.is_empty());
    let first_x = &members[0].x;
    if members.iter().all(|m| &m.x == first_x) {
        // The bound is already the exact worst case of this first stage.
        return Ok(Some(Incumbent {
            x: first_x.clone(),
            value: node.run.value,
            scenario: node.run.scenario.clone(),
            policy: node.pool.clone(),
        }));
    }
    if config.rounding_incumbents {
        let rounded: Vec<bool> = x_bar.iter().map(|&v| v >= 0.5).collect();
        if canon.first_stage_feasible(&rounded) {
            if let Some((value, scenario, policy)) =
                cached_eval(rounded.clone(), node, set, oracle, config, cache, counters)?
            {
                return Ok(Some(Incumbent { x: rounded, value, scenario, policy }));
            }
        }
    }
    let mut best: Option<Incumbent> = None;
    for x in node.pool.most_frequent_first_stages(3) {
        if let Some((value, scenario, policy)) =
            cached_eval(x.clone(), node, set, oracle, config, cache, counters)?
        {
            if best.as_ref().map_or(true, |b| value < b.value) {
                best = Some(Incumbent { x, value, scenario, policy });
            }
        }
    }
    Ok(best)
}

fn cached_eval(
    x: Vec<bool>,
    node: &Node,
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    config: &BnbConfig,
    cache: &mut EvalCache,
    counters: &mut Counters,
) -> Result<Option<(f64, Scenario, SolutionPool)>> {
    if let Some(hit) = cache.get(&x) {
        return Ok(hit.clone());
    }
    let eval = evaluate_first_stage(set, oracle, &x, &node.pool, &config.cg, counters)?
        .map(|e| (e.value, e.scenario, e.pool));
    cache.insert(x, eval.clone());
    Ok(eval)
}

type ChildOutcome = (FixationSet, SolutionPool, Option<CgRun>, Counters);

/// Computes both child bounds, in parallel when allowed. Output order is
/// fixed (zero branch first) so reports do not depend on the thread count.
fn expand(
    node: &Node,
    children: [FixationSet; 2],
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    cg: &CgOptions,
    threads: usize,
) -> Result<Vec<ChildOutcome>> {
    let [fix0, fix1] = children;
    let warm0 = node.pool.filtered(&fix0);
    let warm1 = node.pool.filtered(&fix1);
    let solve_child = |fix: &FixationSet, mut pool: SolutionPool| {
        let mut counters = Counters::new();
        let run = lower_bound(set, oracle, fix, &mut pool, cg, &mut counters);
        (run, pool, counters)
    };
    let ((r0, p0, c0), (r1, p1, c1)) = if threads >= 2 {
        std::thread::scope(|s| {
            let h1 = s.spawn(|| solve_child(&fix1, warm1));
            let out0 = solve_child(&fix0, warm0);
            (out0, h1.join().expect("child bound worker panicked"))
        })
    } else {
        (solve_child(&fix0, warm0), solve_child(&fix1, warm1))
    };
    Ok(vec![(fix0, p0, r0?, c0), (fix1, p1, r1?, c1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;
    use crate::problems::explicit::{ExplicitEntry, ExplicitInstance};
    use crate::problems::ExhaustiveOracle;
    use crate::cg::solve_master;
    use crate::model::Solution;

    fn solve_default(inst: ExplicitInstance, set: &UncertaintySet, config: &BnbConfig) -> RunReport {
        let canon = Canonical::new(inst);
        let oracle = ExhaustiveOracle::new(&canon).unwrap();
        solve_bnb(&canon, set, &oracle, config).unwrap()
    }

    #[test]
    fn toy_closes_at_the_root() {
        let (inst, set) = ExplicitInstance::toy();
        let r = solve_default(inst, &set, &BnbConfig::default());
        assert_eq!(r.status, RunStatus::Optimal);
        assert!((r.objective.unwrap() - 1.5).abs() < 1e-9);
        assert_eq!(r.best_x.as_deref(), Some(&[true][..]));
        assert!((r.root_bound.unwrap() - 1.5).abs() < 1e-9);
        assert_eq!(r.counters.nodes, 1);
        assert_eq!(r.counters.oracle_calls, 2);
        assert_eq!(r.counters.seed_calls, 1);
        assert!(r.counters.balanced());
        assert_eq!(r.worst_scenario.as_deref(), Some(&[1.0][..]));
        let policy = r.policy.unwrap();
        assert_eq!(policy.len(), 1);
        assert_eq!(policy.members()[0].y, vec![true]);
    }

    #[test]
    fn maximize_problems_report_native_values() {
        let (inst, set) = ExplicitInstance::toy_maximize();
        let canon = Canonical::new(inst);
        let oracle = ExhaustiveOracle::new(&canon).unwrap();
        let r = solve_bnb(&canon, &set, &oracle, &BnbConfig::default()).unwrap();
        assert!((r.objective.unwrap() + 1.5).abs() < 1e-9);
        assert!((r.bound.unwrap() + 1.5).abs() < 1e-9);
        assert_eq!(r.best_x.as_deref(), Some(&[true][..]));
    }

    /// Two first stages whose costs cross at the box midpoint: the root
    /// bound is 0.5 while both exact values are 1, forcing one branch.
    fn crossing() -> (ExplicitInstance, UncertaintySet) {
        let entries = vec![
            ExplicitEntry { x: vec![false], y: vec![false], base: 0.0, scenario: vec![1.0] },
            ExplicitEntry { x: vec![true], y: vec![false], base: 1.0, scenario: vec![-1.0] },
        ];
        let inst = ExplicitInstance::new(1, 1, 1, Sense::Minimize, entries).unwrap();
        let set = UncertaintySet::interval_box(vec![0.0], vec![1.0]).unwrap();
        (inst, set)
    }

    #[test]
    fn crossing_instance_branches_once_with_rounding() {
        let (inst, set) = crossing();
        let r = solve_default(inst, &set, &BnbConfig::default());
        assert_eq!(r.status, RunStatus::Optimal);
        assert!((r.objective.unwrap() - 1.0).abs() < 1e-9);
        // The pool average 0.5 rounds up, so the rounding incumbent wins.
        assert_eq!(r.best_x.as_deref(), Some(&[true][..]));
        assert!((r.root_bound.unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(r.counters.nodes, 3);
        assert_eq!(r.counters.oracle_calls, 6);
        assert_eq!(r.worst_scenario.as_deref(), Some(&[0.0][..]));
        assert!(r.counters.balanced());
        assert!((r.counters.mean_ub_iterations() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_instance_without_rounding_evaluates_the_pool() {
        let (inst, set) = crossing();
        let config = BnbConfig { rounding_incumbents: false, ..BnbConfig::default() };
        let r = solve_default(inst, &set, &config);
        assert_eq!(r.status, RunStatus::Optimal);
        assert!((r.objective.unwrap() - 1.0).abs() < 1e-9);
        // Pool order decides among the equal-value first stages.
        assert_eq!(r.best_x.as_deref(), Some(&[false][..]));
        assert_eq!(r.worst_scenario.as_deref(), Some(&[1.0][..]));
        assert_eq!(r.counters.nodes, 3);
        assert_eq!(r.counters.oracle_calls, 7);
        assert!(r.counters.balanced());
    }

    #[test]
    fn infeasible_rounding_falls_back_to_pool_members() {
        // Feasible first stages are (0,1) and (1,0); the average rounds to
        // (1,1) which is not in the table.
        let entries = vec![
            ExplicitEntry { x: vec![false, true], y: vec![false], base: 0.0, scenario: vec![1.0] },
            ExplicitEntry { x: vec![true, false], y: vec![false], base: 1.0, scenario: vec![-1.0] },
        ];
        let inst = ExplicitInstance::new(2, 1, 1, Sense::Minimize, entries).unwrap();
        let set = UncertaintySet::interval_box(vec![0.0], vec![1.0]).unwrap();
        let r = solve_default(inst, &set, &BnbConfig::default());
        assert_eq!(r.status, RunStatus::Optimal);
        assert!((r.objective.unwrap() - 1.0).abs() < 1e-9);
        // The oracle enumerates (1,0) first, so it seeds the pool and wins
        // the tie between the two equal-value first stages.
        assert_eq!(r.best_x.as_deref(), Some(&[true, false][..]));
    }

    #[test]
    fn node_limit_stops_with_a_proven_bound() {
        let (inst, set) = crossing();
        let config = BnbConfig { node_limit: Some(1), ..BnbConfig::default() };
        let r = solve_default(inst, &set, &config);
        assert_eq!(r.status, RunStatus::LimitReached);
        assert_eq!(r.objective, None);
        assert!((r.bound.unwrap() - 0.5).abs() < 1e-9);
        assert!((r.root_bound.unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn branch_selection_prefers_the_most_fractional_free_index() {
        assert_eq!(select_branch_var(&[0.9, 0.45, 0.0], &[0, 1, 2]), 1);
        assert_eq!(select_branch_var(&[0.5, 0.5], &[0, 1]), 0);
        assert_eq!(select_branch_var(&[0.1, 0.45, 0.52], &[1, 2]), 2);
        assert_eq!(select_branch_var(&[1.0, 0.0], &[0, 1]), 0);
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let (inst, set) = ExplicitInstance::random(42, 3, 2, 2);
        let canon = Canonical::new(inst);
        let oracle = ExhaustiveOracle::new(&canon).unwrap();
        let a = solve_bnb(&canon, &set, &oracle, &BnbConfig::default()).unwrap();
        let b = solve_bnb(&canon, &set, &oracle, &BnbConfig::default()).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.best_x, b.best_x);
        assert_eq!(a.worst_scenario, b.worst_scenario);
        assert_eq!(a.counters, b.counters);
    }

    #[test]
    fn threaded_child_bounds_change_nothing() {
        let (inst, set) = ExplicitInstance::random(43, 3, 2, 2);
        let canon = Canonical::new(inst);
        let oracle = ExhaustiveOracle::new(&canon).unwrap();
        let sequential = solve_bnb(&canon, &set, &oracle, &BnbConfig::default()).unwrap();
        let threaded = solve_bnb(&canon, &set, &oracle, &BnbConfig { threads: 2, ..BnbConfig::default() }).unwrap();
        assert_eq!(sequential.objective, threaded.objective);
        assert_eq!(sequential.best_x, threaded.best_x);
        assert_eq!(sequential.counters, threaded.counters);
    }

    fn brute_reference(inst: &ExplicitInstance, set: &UncertaintySet) -> f64 {
        let mut best = f64::INFINITY;
        let n1 = inst.first_stage_len();
        for mask in 0u32..(1 << n1) {
            let x: Vec<bool> = (0..n1).map(|i| (mask >> i) & 1 == 1).collect();
            let members: Vec<Solution> = inst
                .entries()
                .iter()
                .filter(|e| e.x == x)
                .map(|e| Solution::new(inst, e.x.clone(), e.y.clone()).unwrap())
                .collect();
            if members.is_empty() {
                continue;
            }
            let phi = solve_master(&SolutionPool::with_members(members), set).unwrap().value;
            best = best.min(phi);
        }
        best
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn both_branching_rules_match_exhaustive_search(seed in 0u64..5000) {
            let (inst, set) = ExplicitInstance::random(seed, 3, 2, 2);
            let expected = brute_reference(&inst, &set);
            for branching in [Branching::PoolFrequency, Branching::OptimalWeights] {
                let canon = Canonical::new(inst.clone());
                let oracle = ExhaustiveOracle::new(&canon).unwrap();
                let config = BnbConfig { branching, ..BnbConfig::default() };
                let r = solve_bnb(&canon, &set, &oracle, &config).unwrap();
                proptest::prop_assert_eq!(r.status, RunStatus::Optimal);
                let got = r.objective.unwrap();
                proptest::prop_assert!((got - expected).abs() <= 1e-6,
                    "solver {} vs reference {}", got, expected);
                proptest::prop_assert!(r.root_bound.unwrap() <= got + 1e-6);
                proptest::prop_assert!(r.counters.balanced());
            }
        }
    }
}
