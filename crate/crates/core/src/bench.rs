//! Reference solver, scenario samplers, and evaluation metrics.
//!
//! The brute-force path is deliberately independent of the generation
//! solvers: it enumerates first stages outright and prices each one with a
//! convex-combination LP (the dual of the scenario-choice problem), so
//! agreement between the two is meaningful evidence.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, INF};
use crate::model::{Canonical, FixationSet, Oracle, Problem, Scenario, UncertaintySet};

/// Worst-case cost of a finite candidate set, solved in the
/// convex-combination (dual) form: few rows, one column per candidate.
/// Candidates are `(base, scenario_coefficients)` pairs in minimize sense.
fn dual_worst_case(candidates: &[(f64, Vec<f64>)], set: &UncertaintySet) -> Result<f64> {
    assert!(!candidates.is_empty(), "worst case of an empty candidate set");
    let p = set.deviation_dim();
    let (lo, hi) = set.deviation_bounds();
    let mut lp = LpProblem::new();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p + 1];
    for (base, h) in candidates {
        let r = base + h.iter().zip(set.nominal()).map(|(a, n)| a * n).sum::<f64>();
        let j = lp.push_var(-r, 0.0, INF);
        rows[0].push((j, 1.0));
        let g = set.map().apply_transpose(h);
        for (k, &gk) in g.iter().enumerate() {
            if gk != 0.0 {
                rows[1 + k].push((j, -gk));
            }
        }
    }
    for (coefs, b) in set.rows() {
        let j = lp.push_var(-b, 0.0, INF);
        for (k, &a) in coefs.iter().enumerate() {
            if a != 0.0 {
                rows[1 + k].push((j, a));
            }
        }
    }
    for k in 0..p {
        let up = lp.push_var(-hi[k], 0.0, INF);
        rows[1 + k].push((up, 1.0));
        let down = lp.push_var(lo[k], 0.0, INF);
        rows[1 + k].push((down, -1.0));
    }
    let mut row_iter = rows.into_iter();
    lp.push_row(row_iter.next().unwrap(), Relation::Eq, 1.0);
    for coefs in row_iter {
        lp.push_row(coefs, Relation::Eq, 0.0);
    }
    let r = solve_lp(&lp)?;
    match r.status {
        LpStatus::Optimal => Ok(-r.objective),
        LpStatus::Stalled => Err(Error::Numerical("worst-case pricing stalled".into())),
        _ => Err(Error::Invariant("worst-case pricing lost feasibility".into())),
    }
}

/// Exact robust optimum by full enumeration. Problems without a structured
/// recourse listing fall back to scanning all recourse vectors, which is
/// refused above 14 total variables. `None` means no feasible first stage.
pub fn brute_force_solve<P: Problem>(
    canon: &Canonical<P>,
    set: &UncertaintySet,
) -> Result<Option<(f64, Vec<bool>)>> {
    let n1 = canon.first_stage_len();
    let n2 = canon.second_stage_len();
    if n1 > 20 {
        return Err(Error::InvalidInput("brute force is limited to 20 first-stage variables".into()));
    }
    let structured = canon.second_stage_candidates(&vec![false; n1]).is_some();
    if !structured && n1 + n2 > 14 {
        return Err(Error::InvalidInput(
            "brute force without a recourse listing is limited to 14 variables".into(),
        ));
    }
    let mut best: Option<(f64, Vec<bool>)> = None;
    for mask in 0u32..(1 << n1) {
        let x: Vec<bool> = (0..n1).map(|i| (mask >> i) & 1 == 1).collect();
        if !canon.first_stage_feasible(&x) {
            continue;
        }
        let mut candidates = Vec::new();
        let mut add = |y: Vec<bool>| -> Result<()> {
            if canon.full_feasible(&x, &y) {
                candidates.push(canon.objective(&x, &y)?);
            }
            Ok(())
        };
        match canon.second_stage_candidates(&x) {
            Some(ys) => {
                for y in ys {
                    add(y)?;
                }
            }
            None => {
                for ymask in 0u32..(1 << n2) {
                    add((0..n2).map(|i| (ymask >> i) & 1 == 1).collect())?;
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }
        let phi = dual_worst_case(&candidates, set)?;
        if best.as_ref().map_or(true, |(b, _)| phi < *b) {
            best = Some((phi, x));
        }
    }
    Ok(best.map(|(v, x)| (canon.to_native(v), x)))
}

/// Budget structure of a set, when it has one: dimension and budget of the
/// `[0,1]^p` deviation box cut by a single all-ones row.
pub fn budget_of(set: &UncertaintySet) -> Option<(usize, f64)> {
    let p = set.deviation_dim();
    let (lo, hi) = set.deviation_bounds();
    if !lo.iter().all(|&v| v == 0.0) || !hi.iter().all(|&v| v == 1.0) {
        return None;
    }
    match set.rows() {
        [(coefs, gamma)] if coefs.len() == p && coefs.iter().all(|&a| a == 1.0) => Some((p, *gamma)),
        _ => None,
    }
}

/// Draws a deviation from the sorted-increment law: `p` uniforms in
/// `[0, gamma]`, sorted, first differences. Any increment above one rejects
/// the draw; persistent rejection is an error rather than a loop.
pub fn sample_budgeted<R: Rng>(set: &UncertaintySet, rng: &mut R) -> Result<Scenario> {
    let Some((p, gamma)) = budget_of(set) else {
        return Err(Error::InvalidInput("budget sampler needs a budgeted set".into()));
    };
    if gamma == 0.0 {
        return Ok(set.nominal_scenario());
    }
    for _ in 0..1_000_000u32 {
        let mut points: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..gamma)).collect();
        points.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        let mut delta = Vec::with_capacity(p);
        let mut ok = true;
        for &s in &points {
            let d = s - prev;
            if d > 1.0 {
                ok = false;
                break;
            }
            delta.push(d);
            prev = s;
        }
        if ok {
            let scenario = set.realize(&delta);
            debug_assert!(set.contains(&scenario, 1e-9));
            return Ok(scenario);
        }
    }
    Err(Error::Numerical("budget sampler rejected a million draws".into()))
}

/// Scenario draw for any set: budget structure uses the sorted-increment
/// law, anything else falls back to uniform draws over the deviation box
/// with rejection on the polytope rows.
pub fn sample_scenario<R: Rng>(set: &UncertaintySet, rng: &mut R) -> Result<Scenario> {
    if budget_of(set).is_some() {
        return sample_budgeted(set, rng);
    }
    let (lo, hi) = set.deviation_bounds();
    for _ in 0..1_000_000u32 {
        let delta: Vec<f64> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| if l == h { l } else { rng.gen_range(l..h) })
            .collect();
        let feasible = set
            .rows()
            .iter()
            .all(|(coefs, b)| coefs.iter().zip(&delta).map(|(a, d)| a * d).sum::<f64>() <= *b + 1e-12);
        if feasible {
            return Ok(set.realize(&delta));
        }
    }
    Err(Error::Numerical("box sampler rejected a million draws".into()))
}

/// Per-scenario policy suboptimality and its average, in percent.
#[derive(Clone, Debug)]
pub struct PolicyGap {
    /// One entry per scenario; `None` where the nonpositive denominator
    /// made the ratio undefined (skip-and-warn).
    pub per_scenario_percent: Vec<Option<f64>>,
    pub mean_percent: Option<f64>,
    pub skipped: usize,
}

/// Compares the pooled recourses against the exact second-stage optimum of
/// `x_star` on each scenario: `(pool_best - exact) / pool_best`. Pool
/// members with a different first stage are ignored.
pub fn policy_gap(
    pool: &crate::cg::SolutionPool,
    x_star: &[bool],
    oracle: &dyn Oracle,
    scenarios: &[Scenario],
) -> Result<PolicyGap> {
    let fix = FixationSet::pin_all(x_star);
    let members: Vec<_> = pool.iter().filter(|m| m.same_first_stage(x_star)).collect();
    if members.is_empty() {
        return Err(Error::InvalidInput("policy pool holds nothing for the chosen first stage".into()));
    }
    let mut per_scenario = Vec::with_capacity(scenarios.len());
    let mut total = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    for c in scenarios {
        let pool_best = members
            .iter()
            .map(|m| m.value(c))
            .fold(f64::INFINITY, f64::min);
        let exact = oracle
            .solve(c, &fix)?
            .ok_or_else(|| Error::Invariant("oracle rejected a first stage the pool covers".into()))?
            .value(c);
        debug_assert!(exact <= pool_best + 1e-6, "pool beat the exact second stage");
        if pool_best <= 1e-12 {
            per_scenario.push(None);
            skipped += 1;
            continue;
        }
        let ratio = 100.0 * (pool_best - exact) / pool_best;
        per_scenario.push(Some(ratio));
        total += ratio;
        counted += 1;
    }
    let mean_percent = (counted > 0).then(|| total / counted as f64);
    Ok(PolicyGap { per_scenario_percent: per_scenario, mean_percent, skipped })
}

/// Cost of ignoring recourse: percent difference between the robust
/// two-stage value and the deterministic optimum at the nominal scenario,
/// both in canonical minimize values. `None` when the deterministic value
/// vanishes.
pub fn adaptivity_gap(
    set: &UncertaintySet,
    oracle: &dyn Oracle,
    two_stage_value: f64,
) -> Result<Option<f64>> {
    let nominal = set.nominal_scenario();
    let det = oracle
        .solve(&nominal, &FixationSet::empty())?
        .ok_or_else(|| Error::InvalidInput("deterministic problem is infeasible".into()))?
        .value(&nominal);
    if det.abs() <= 1e-12 {
        return Ok(None);
    }
    Ok(Some(100.0 * (two_stage_value - det) / det.abs()))
}

/// Percent spread between the optimum and the root relaxation bound, both
/// in canonical minimize values. `None` when the optimum vanishes.
pub fn root_gap(value: f64, root_bound: f64) -> Option<f64> {
    if value.abs() <= 1e-12 {
        None
    } else {
        Some(100.0 * (value - root_bound) / value.abs())
    }
}

/// Metric bundle attached to solver reports.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub adaptivity_gap_percent: Option<f64>,
    pub root_gap_percent: Option<f64>,
    pub policy_gap_percent: Option<f64>,
    pub per_scenario_percent: Vec<Option<f64>>,
    pub sample_seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::cg::SolutionPool;
    use crate::model::{Sense, Solution};
    use crate::problems::explicit::{ExplicitEntry, ExplicitInstance};
    use crate::problems::ExhaustiveOracle;

    #[test]
    fn brute_force_solves_the_toy() {
        let (inst, set) = ExplicitInstance::toy();
        let canon = Canonical::new(inst);
        let (value, x) = brute_force_solve(&canon, &set).unwrap().unwrap();
        assert!((value - 1.5).abs() < 1e-9);
        assert_eq!(x, vec![true]);
    }

    #[test]
    fn brute_force_singleton_is_the_pointwise_minimum() {
        let (inst, _) = ExplicitInstance::toy();
        let set = UncertaintySet::singleton(vec![0.7]).unwrap();
        let canon = Canonical::new(inst);
        let (value, x) = brute_force_solve(&canon, &set).unwrap().unwrap();
        assert!((value - 1.2).abs() < 1e-9);
        assert_eq!(x, vec![true]);
    }

    #[test]
    fn entry_order_does_not_matter() {
        let (inst, set) = ExplicitInstance::toy();
        let mut entries = inst.entries().to_vec();
        entries.reverse();
        let shuffled = ExplicitInstance::new(1, 1, 1, Sense::Minimize, entries).unwrap();
        let a = brute_force_solve(&Canonical::new(inst), &set).unwrap().unwrap();
        let b = brute_force_solve(&Canonical::new(shuffled), &set).unwrap().unwrap();
        assert!((a.0 - b.0).abs() < 1e-12);
        assert_eq!(a.1, b.1);
    }

    struct Opaque;

    impl Problem for Opaque {
        fn first_stage_len(&self) -> usize {
            8
        }
        fn second_stage_len(&self) -> usize {
            8
        }
        fn scenario_len(&self) -> usize {
            1
        }
        fn sense(&self) -> Sense {
            Sense::Minimize
        }
        fn objective(&self, _x: &[bool], _y: &[bool]) -> Result<(f64, Vec<f64>)> {
            Ok((0.0, vec![0.0]))
        }
        fn first_stage_feasible(&self, _x: &[bool]) -> bool {
            true
        }
        fn full_feasible(&self, _x: &[bool], _y: &[bool]) -> bool {
            true
        }
    }

    #[test]
    fn unstructured_blowup_is_refused() {
        let set = UncertaintySet::interval_box(vec![0.0], vec![1.0]).unwrap();
        let canon = Canonical::new(Opaque);
        assert!(brute_force_solve(&canon, &set).is_err());
    }

    #[test]
    fn budget_detection_and_zero_budget_sampling() {
        let set = UncertaintySet::budgeted(vec![1.0, 2.0], vec![0.5, 0.5], 0.0).unwrap();
        assert_eq!(budget_of(&set), Some((2, 0.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_budgeted(&set, &mut rng).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0]);
        let box_set = UncertaintySet::interval_box(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(budget_of(&box_set), None);
        assert!(sample_budgeted(&box_set, &mut rng).is_err());
    }

    #[test]
    fn budget_samples_stay_members_with_plausible_mass() {
        let set = UncertaintySet::budgeted(vec![0.0; 4], vec![1.0; 4], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut total = 0.0;
        let draws = 2000;
        for _ in 0..draws {
            let s = sample_budgeted(&set, &mut rng).unwrap();
            assert!(set.contains(&s, 1e-9));
            total += s.values().iter().sum::<f64>();
        }
        // Sum of deviations averages gamma * p / (p + 1) = 0.8.
        let mean = total / draws as f64;
        assert!((mean - 0.8).abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn box_sampler_respects_rows() {
        let set = UncertaintySet::budgeted(vec![0.0; 3], vec![1.0; 3], 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = sample_scenario(&set, &mut rng).unwrap();
            assert!(set.contains(&s, 1e-9));
        }
    }

    #[test]
    fn policy_gap_measures_pool_suboptimality() {
        let (inst, _) = ExplicitInstance::toy();
        let oracle = ExhaustiveOracle::new(&inst).unwrap();
        let z3 = Solution::new(&inst, vec![true], vec![false]).unwrap();
        let z4 = Solution::new(&inst, vec![true], vec![true]).unwrap();
        let low = Scenario::new(vec![0.0]);
        // Only the flat-cost recourse pooled: at c = 0 the exact optimum is
        // 0.5, the pool pays 1.5.
        let pool = SolutionPool::with_members(vec![z3.clone()]);
        let gap = policy_gap(&pool, &[true], &oracle, &[low.clone()]).unwrap();
        let got = gap.mean_percent.unwrap();
        assert!((got - 100.0 * (1.5 - 0.5) / 1.5).abs() < 1e-9);
        // With the optimum pooled the gap closes.
        let full = SolutionPool::with_members(vec![z3, z4]);
        let gap = policy_gap(&full, &[true], &oracle, &[low]).unwrap();
        assert!((gap.mean_percent.unwrap() - 0.0).abs() < 1e-12);
        assert_eq!(gap.skipped, 0);
    }

    #[test]
    fn nonpositive_denominators_are_skipped() {
        let entries = vec![
            ExplicitEntry { x: vec![true], y: vec![false], base: -2.0, scenario: vec![0.0] },
            ExplicitEntry { x: vec![true], y: vec![true], base: -3.0, scenario: vec![0.0] },
        ];
        let inst = ExplicitInstance::new(1, 1, 1, Sense::Minimize, entries).unwrap();
        let oracle = ExhaustiveOracle::new(&inst).unwrap();
        let pool = SolutionPool::with_members(vec![Solution::new(&inst, vec![true], vec![false]).unwrap()]);
        let gap = policy_gap(&pool, &[true], &oracle, &[Scenario::new(vec![0.5])]).unwrap();
        assert_eq!(gap.skipped, 1);
        assert_eq!(gap.mean_percent, None);
        assert_eq!(gap.per_scenario_percent, vec![None]);
    }

    #[test]
    fn adaptivity_gap_on_the_toy_is_fifty_percent() {
        let (inst, set) = ExplicitInstance::toy();
        let oracle = ExhaustiveOracle::new(&inst).unwrap();
        let gap = adaptivity_gap(&set, &oracle, 1.5).unwrap().unwrap();
        assert!((gap - 50.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_adaptivity_gap_is_zero() {
        let (inst, _) = ExplicitInstance::toy();
        let set = UncertaintySet::singleton(vec![0.7]).unwrap();
        let oracle = ExhaustiveOracle::new(&inst).unwrap();
        let canon_value = 1.2;
        let gap = adaptivity_gap(&set, &oracle, canon_value).unwrap().unwrap();
        assert!(gap.abs() < 1e-9);
    }

    #[test]
    fn root_gap_handles_the_zero_optimum() {
        assert!((root_gap(2.0, 1.0).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(root_gap(0.0, -1.0), None);
        assert!((root_gap(-2.0, -3.0).unwrap() - 50.0).abs() < 1e-12);
    }
}
