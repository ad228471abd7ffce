//! Scenario expansion: a growing MIP master alternated with worst-case
//! separation.
//!
//! The master keeps one duplicated second-stage block per accumulated
//! scenario and minimizes the epigraph variable over them, yielding a lower
//! bound and a candidate first stage. Separation evaluates that candidate's
//! exact worst case, which either closes the gap or contributes the next
//! scenario. Families opt in by describing their feasible set and costs as
//! linear rows over binaries through `CcgEncode`.

use std::time::{Duration, Instant};

use crate::cg::{evaluate_first_stage, CgOptions, SolutionPool};
use crate::error::{Error, Result};
use crate::lp::{LpProblem, Relation, INF, NEG_INF};
use crate::mip::{solve_mip, MipLimits, MipProblem, MipStatus};
use crate::model::{Canonical, Oracle, Problem, Scenario, Solution, UncertaintySet};
use crate::report::{Counters, RunReport, RunStatus};

/// Incrementally assembles the master MIP. Plugins push variables and rows
/// through this so variable bookkeeping stays in one place.
pub struct MasterBuilder {
    lp: LpProblem,
    binaries: Vec<usize>,
}

impl MasterBuilder {
    fn new() -> Self {
        MasterBuilder { lp: LpProblem::new(), binaries: Vec::new() }
    }

    pub fn binary(&mut self) -> usize {
        let j = self.lp.push_var(0.0, 0.0, 1.0);
        self.binaries.push(j);
        j
    }

    pub fn continuous(&mut self, lower: f64, upper: f64) -> usize {
        self.lp.push_var(0.0, lower, upper)
    }

    pub fn row(&mut self, coefs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.lp.push_row(coefs, relation, rhs);
    }
}

/// Linear self-description for the master. Both methods write rows in the
/// canonical minimize sense: the epigraph row emitted by `scenario_block`
/// must enforce `mu >= cost(x, y, c)` with cost as the solvers minimize it.
pub trait CcgEncode: Problem {
    /// Rows over the first-stage variables defining membership in X.
    fn first_stage_rows(&self, b: &mut MasterBuilder, x: &[usize]) -> Result<()>;

    /// One scenario's second-stage block: recourse variables, coupling rows
    /// tying them to `x`, and the epigraph row on `mu`. Returns the ids of
    /// the recourse binaries in stage order for decoding.
    fn scenario_block(&self, b: &mut MasterBuilder, x: &[usize], mu: usize, c: &Scenario) -> Result<Vec<usize>>;
}

impl<P: CcgEncode> CcgEncode for Canonical<P> {
    fn first_stage_rows(&self, b: &mut MasterBuilder, x: &[usize]) -> Result<()> {
        self.inner().first_stage_rows(b, x)
    }

    fn scenario_block(&self, b: &mut MasterBuilder, x: &[usize], mu: usize, c: &Scenario) -> Result<Vec<usize>> {
        self.inner().scenario_block(b, x, mu, c)
    }
}

/// Master over the given scenarios. Returns the MIP (stated as maximizing
/// `-mu`), the epigraph variable, the first-stage variable ids, and each
/// block's recourse ids.
pub fn build_master<E: CcgEncode>(
    problem: &E,
    scenarios: &[Scenario],
) -> Result<(MipProblem, usize, Vec<usize>, Vec<Vec<usize>>)> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("master needs at least one scenario".into()));
    }
    let mut b = MasterBuilder::new();
    let mu = b.lp.push_var(-1.0, NEG_INF, INF);
    let x: Vec<usize> = (0..problem.first_stage_len()).map(|_| b.binary()).collect();
    problem.first_stage_rows(&mut b, &x)?;
    let mut blocks = Vec::with_capacity(scenarios.len());
    for c in scenarios {
        let y = problem.scenario_block(&mut b, &x, mu, c)?;
        if y.len() != problem.second_stage_len() {
            return Err(Error::Invariant("scenario block returned a misshapen recourse".into()));
        }
        blocks.push(y);
    }
    Ok((MipProblem { lp: b.lp, binaries: b.binaries }, mu, x, blocks))
}

#[derive(Clone, Copy, Debug)]
pub struct CcgConfig {
    /// Stop once the master value is within this of the candidate's exact
    /// worst case.
    pub gap_tolerance: f64,
    pub cg: CgOptions,
    /// Cap on expansion rounds; exceeding it reports the remaining gap.
    pub max_iterations: u64,
    pub time_limit: Option<Duration>,
    /// Limits handed to each master solve.
    pub mip: MipLimits,
}

impl Default for CcgConfig {
    fn default() -> Self {
        CcgConfig {
            gap_tolerance: 1e-6,
            cg: CgOptions::default(),
            max_iterations: 200,
            time_limit: None,
            mip: MipLimits::default(),
        }
    }
}

/// Full run: the report plus per-iteration bound histories, both in the
/// problem's native sense (for maximize problems the master history bounds
/// from above and decreases).
#[derive(Clone, Debug)]
pub struct CcgOutcome {
    pub report: RunReport,
    /// Master value after each expansion round.
    pub master_history: Vec<f64>,
    /// Exact worst case of each round's candidate first stage.
    pub eval_history: Vec<f64>,
}

struct Best {
    x: Vec<bool>,
    value: f64,
    scenario: Scenario,
    policy: SolutionPool,
}

/// Alternates master and separation until the bounds close to within
/// `gap_tolerance`. A repeated separation scenario cannot make progress and
/// is reported as a numerical failure rather than looping.
pub fn solve_ccg<P: CcgEncode>(
    canon: &Canonical<P>,
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    config: &CcgConfig,
) -> Result<CcgOutcome> {
    if !(config.gap_tolerance > 0.0) {
        return Err(Error::InvalidInput("gap tolerance must be positive".into()));
    }
    if set.scenario_dim() != canon.scenario_len() {
        return Err(Error::InvalidInput("scenario set dimension does not match the problem".into()));
    }
    let started = Instant::now();
    let mut counters = Counters::new();
    let mut scenarios = vec![set.nominal_scenario()];
    let mut master_history = Vec::new();
    let mut eval_history = Vec::new();
    let mut best: Option<Best> = None;
    let mut prev_master = f64::NEG_INFINITY;
    let mut status = RunStatus::Optimal;
    let mut bound = f64::NEG_INFINITY;

    loop {
        counters.ccg_iterations += 1;
        let (mip, _mu, x_ids, blocks) = build_master(canon, &scenarios)?;
        let result = solve_mip(&mip, &config.mip)?;
        counters.master_solves += 1;
        match result.status {
            MipStatus::Infeasible => {
                return Ok(CcgOutcome {
                    report: RunReport::infeasible(counters),
                    master_history,
                    eval_history,
                });
            }
            MipStatus::LimitReached => {
                // The master's proven bound still bounds the full problem.
                bound = bound.max(-result.best_bound);
                master_history.push(canon.to_native(-result.best_bound));
                status = RunStatus::LimitReached;
                break;
            }
            MipStatus::Optimal => {}
        }
        let master_value = -result.objective;
        debug_assert!(
            master_value >= prev_master - 1e-6,
            "master bound regressed from {prev_master} to {master_value}"
        );
        prev_master = master_value;
        bound = master_value;
        master_history.push(canon.to_native(master_value));
        if let Some(b) = &best {
            debug_assert!(master_value <= b.value + 1e-6, "master bound crossed the incumbent");
        }

        let x_star: Vec<bool> = x_ids.iter().map(|&j| result.assignment[j] >= 0.5).collect();
        let mut hint = SolutionPool::new();
        for y_ids in &blocks {
            let y: Vec<bool> = y_ids.iter().map(|&j| result.assignment[j] >= 0.5).collect();
            let sol = Solution::new(canon, x_star.clone(), y)
                .map_err(|_| Error::Invariant("master produced an infeasible block".into()))?;
            hint.push(sol);
        }
        let eval = evaluate_first_stage(set, oracle, &x_star, &hint, &config.cg, &mut counters)?
            .ok_or_else(|| Error::Invariant("master chose a first stage the oracle rejects".into()))?;
        eval_history.push(canon.to_native(eval.value));
        if best.as_ref().map_or(true, |b| eval.value < b.value) {
            best = Some(Best { x: x_star, value: eval.value, scenario: eval.scenario.clone(), policy: eval.pool.clone() });
        }

        if master_value >= eval.value - config.gap_tolerance {
            break;
        }
        if counters.ccg_iterations >= config.max_iterations
            || config.time_limit.is_some_and(|cap| started.elapsed() >= cap)
        {
            status = RunStatus::LimitReached;
            break;
        }
        let fresh = eval.scenario;
        if scenarios.iter().any(|s| s.max_distance(&fresh) <= 1e-9) {
            return Err(Error::Numerical(
                "separation repeated a scenario without closing the bounds".into(),
            ));
        }
        scenarios.push(fresh);
    }

    debug_assert!(counters.balanced(), "oracle call accounting drifted");
    let report = match best {
        Some(b) => RunReport {
            status,
            objective: Some(canon.to_native(b.value)),
            bound: Some(canon.to_native(bound)),
            root_bound: master_history.first().copied(),
            best_x: Some(b.x),
            worst_scenario: Some(b.scenario.values().to_vec()),
            policy: Some(b.policy),
            counters,
        },
        None => RunReport {
            status: RunStatus::LimitReached,
            objective: None,
            bound: Some(canon.to_native(bound)),
            root_bound: master_history.first().copied(),
            best_x: None,
            worst_scenario: None,
            policy: None,
            counters,
        },
    };
    Ok(CcgOutcome { report, master_history, eval_history })
}
