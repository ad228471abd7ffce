//! Shared modeling vocabulary: problems, solutions, scenarios, uncertainty
//! sets, fixations, and the second-stage oracle contract.
//!
//! Everything downstream works in a canonical minimize space. Problems that
//! naturally maximize are wrapped by [`Canonical`], which negates the cached
//! objective terms; front ends un-negate reported values.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lp::{self, LpProblem, LpStatus, Relation};

/// Tolerance used when testing scenario membership in an uncertainty set.
pub const SCENARIO_MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A fully specified two-stage instance seen through its evaluators.
///
/// Dimensions: `first_stage_len` binary first-stage variables,
/// `second_stage_len` binary second-stage variables, `scenario_len` cost
/// coefficients under uncertainty. The objective of a feasible pair `(x, y)`
/// decomposes as `constant + scenario . coefficients`; `objective` returns
/// those two cached pieces in the problem's native sense.
pub trait Problem: Sync {
    fn first_stage_len(&self) -> usize;
    fn second_stage_len(&self) -> usize;
    fn scenario_len(&self) -> usize;
    fn sense(&self) -> Sense;

    /// Cost decomposition of a feasible assignment. Errs on assignments that
    /// violate the coupling constraints.
    fn objective(&self, x: &[bool], y: &[bool]) -> Result<(f64, Vec<f64>)>;

    /// Membership of `x` in the projected first-stage set: some feasible
    /// second stage must exist.
    fn first_stage_feasible(&self, x: &[bool]) -> bool;

    fn full_feasible(&self, x: &[bool], y: &[bool]) -> bool;

    /// Structured enumeration of all feasible second stages for a fixed
    /// first stage, where the problem knows one cheaper than the generic
    /// power-set scan. `None` means no structure is available.
    fn second_stage_candidates(&self, _x: &[bool]) -> Option<Vec<Vec<bool>>> {
        None
    }
}

/// Wraps a problem so its objective is always a minimization. Wrapping an
/// already canonical problem changes nothing, so the construction is
/// idempotent in effect.
#[derive(Clone, Debug)]
pub struct Canonical<P> {
    inner: P,
    flipped: bool,
}

impl<P: Problem> Canonical<P> {
    pub fn new(inner: P) -> Self {
        let flipped = inner.sense() == Sense::Maximize;
        Canonical { inner, flipped }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    /// True when reported values must be negated back for the native sense.
    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    /// Maps a canonical (minimize) value back to the native sense.
    pub fn to_native(&self, value: f64) -> f64 {
        if self.flipped {
            -value
        } else {
            value
        }
    }
}

impl<P: Problem> Problem for Canonical<P> {
    fn first_stage_len(&self) -> usize {
        self.inner.first_stage_len()
    }

    fn second_stage_len(&self) -> usize {
        self.inner.second_stage_len()
    }

    fn scenario_len(&self) -> usize {
        self.inner.scenario_len()
    }

    fn sense(&self) -> Sense {
        Sense::Minimize
    }

    fn objective(&self, x: &[bool], y: &[bool]) -> Result<(f64, Vec<f64>)> {
        let (mut constant, mut coefs) = self.inner.objective(x, y)?;
        if self.flipped {
            constant = -constant;
            for c in &mut coefs {
                *c = -*c;
            }
        }
        Ok((constant, coefs))
    }

    fn first_stage_feasible(&self, x: &[bool]) -> bool {
        self.inner.first_stage_feasible(x)
    }

    fn full_feasible(&self, x: &[bool], y: &[bool]) -> bool {
        self.inner.full_feasible(x, y)
    }

    fn second_stage_candidates(&self, x: &[bool]) -> Option<Vec<Vec<bool>>> {
        self.inner.second_stage_candidates(x)
    }
}

/// One realized cost vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    values: Vec<f64>,
}

impl Scenario {
    pub fn new(values: Vec<f64>) -> Self {
        Scenario { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Max-norm distance, used for duplicate-scenario detection.
    pub fn max_distance(&self, other: &Scenario) -> f64 {
        assert_eq!(self.len(), other.len(), "scenario dimension mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

impl From<Vec<f64>> for Scenario {
    fn from(values: Vec<f64>) -> Self {
        Scenario::new(values)
    }
}

/// A feasible assignment together with its cached cost decomposition in the
/// canonical minimize space: `value(c) = base_cost + c . scenario_cost`.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<bool>,
    pub y: Vec<bool>,
    pub base_cost: f64,
    pub scenario_cost: Vec<f64>,
}

impl Solution {
    /// Validates feasibility against the problem and caches the cost terms.
    pub fn new(problem: &dyn Problem, x: Vec<bool>, y: Vec<bool>) -> Result<Solution> {
        if x.len() != problem.first_stage_len() || y.len() != problem.second_stage_len() {
            return Err(Error::InvalidInput("assignment length mismatch".into()));
        }
        if !problem.full_feasible(&x, &y) {
            return Err(Error::InvalidInput("assignment violates feasibility".into()));
        }
        let (base_cost, scenario_cost) = problem.objective(&x, &y)?;
        Ok(Solution {
            x,
            y,
            base_cost,
            scenario_cost,
        })
    }

    /// Objective under a realized scenario. Dimension mismatches are a
    /// caller bug and abort loudly.
    pub fn value(&self, c: &Scenario) -> f64 {
        assert_eq!(
            self.scenario_cost.len(),
            c.len(),
            "scenario dimension does not match solution cost vector"
        );
        let mut v = self.base_cost;
        for (a, b) in self.scenario_cost.iter().zip(c.values()) {
            v += a * b;
        }
        v
    }

    pub fn same_assignment(&self, other: &Solution) -> bool {
        self.x == other.x && self.y == other.y
    }

    pub fn same_first_stage(&self, x: &[bool]) -> bool {
        self.x == x
    }
}

/// Linear map from deviation space onto scenario space.
#[derive(Clone, Debug)]
pub enum DeviationMap {
    /// Scenario dimension equals deviation dimension; entry `i` scales
    /// deviation `i`.
    Diagonal(Vec<f64>),
    /// Full matrix, one row of coefficients per scenario coordinate.
    Dense(Vec<Vec<f64>>),
}

impl DeviationMap {
    fn scenario_dim(&self) -> usize {
        match self {
            DeviationMap::Diagonal(d) => d.len(),
            DeviationMap::Dense(rows) => rows.len(),
        }
    }

    fn deviation_dim(&self) -> usize {
        match self {
            DeviationMap::Diagonal(d) => d.len(),
            DeviationMap::Dense(rows) => rows.first().map_or(0, |r| r.len()),
        }
    }

    fn apply(&self, delta: &[f64]) -> Vec<f64> {
        match self {
            DeviationMap::Diagonal(d) => d.iter().zip(delta).map(|(a, b)| a * b).collect(),
            DeviationMap::Dense(rows) => rows
                .iter()
                .map(|row| row.iter().zip(delta).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    /// Transpose application: maps a scenario-space vector back to
    /// deviation space. The master problems use this to express
    /// `c . h = nominal . h + (P^T h) . delta`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        match self {
            DeviationMap::Diagonal(d) => d.iter().zip(v).map(|(a, b)| a * b).collect(),
            DeviationMap::Dense(rows) => {
                let p = self.deviation_dim();
                let mut out = vec![0.0; p];
                for (row, &vi) in rows.iter().zip(v) {
                    for (j, &a) in row.iter().enumerate() {
                        out[j] += a * vi;
                    }
                }
                out
            }
        }
    }
}

/// Polyhedral uncertainty set expressed as the affine image of a deviation
/// polytope: scenarios are `nominal + map(delta)` with `delta` confined to a
/// finite box intersected with extra linear rows `a . delta <= b`.
///
/// Construction validates that the box is finite (boundedness) and that the
/// polytope is nonempty, so downstream code never sees a degenerate set.
#[derive(Clone, Debug)]
pub struct UncertaintySet {
    nominal: Vec<f64>,
    map: DeviationMap,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
}

impl UncertaintySet {
    /// Budget set: each coordinate deviates upward by a fraction of its
    /// deviation magnitude, fractions sum to at most `gamma`.
    pub fn budgeted(nominal: Vec<f64>, deviations: Vec<f64>, gamma: f64) -> Result<Self> {
        if deviations.len() != nominal.len() {
            return Err(Error::InvalidInput("deviation length mismatch".into()));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidInput("budget must be finite and nonnegative".into()));
        }
        if deviations.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInput("deviations must be finite and nonnegative".into()));
        }
        let p = deviations.len();
        let rows = vec![(vec![1.0; p], gamma)];
        Self::general(
            nominal,
            DeviationMap::Diagonal(deviations),
            vec![0.0; p],
            vec![1.0; p],
            rows,
        )
    }

    /// Axis-aligned box `[lower_i, upper_i]` in scenario space.
    pub fn interval_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidInput("box bound length mismatch".into()));
        }
        let m = lower.len();
        let mut nominal = Vec::with_capacity(m);
        let mut half = Vec::with_capacity(m);
        for i in 0..m {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] > upper[i] {
                return Err(Error::InvalidInput(format!("bad box bounds at {i}")));
            }
            nominal.push(0.5 * (lower[i] + upper[i]));
            half.push(0.5 * (upper[i] - lower[i]));
        }
        Self::general(
            nominal,
            DeviationMap::Diagonal(half),
            vec![-1.0; m],
            vec![1.0; m],
            Vec::new(),
        )
    }

    /// A single scenario.
    pub fn singleton(values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        Self::general(
            values,
            DeviationMap::Diagonal(vec![0.0; m]),
            vec![0.0; m],
            vec![0.0; m],
            Vec::new(),
        )
    }

    pub fn general(
        nominal: Vec<f64>,
        map: DeviationMap,
        lower: Vec<f64>,
        upper: Vec<f64>,
        rows: Vec<(Vec<f64>, f64)>,
    ) -> Result<Self> {
        if map.scenario_dim() != nominal.len() {
            return Err(Error::InvalidInput("map does not match scenario dimension".into()));
        }
        let p = map.deviation_dim();
        if lower.len() != p || upper.len() != p {
            return Err(Error::InvalidInput("deviation bounds do not match map".into()));
        }
        for j in 0..p {
            if !lower[j].is_finite() || !upper[j].is_finite() {
                return Err(Error::InvalidInput(
                    "deviation box must be finite so the set is bounded".into(),
                ));
            }
            if lower[j] > upper[j] {
                return Err(Error::InvalidInput(format!("crossed deviation bounds at {j}")));
            }
        }
        for (a, b) in &rows {
            if a.len() != p || !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("malformed budget row".into()));
            }
        }
        let set = UncertaintySet {
            nominal,
            map,
            lower,
            upper,
            rows,
        };
        if !set.rows.is_empty() {
            // One feasibility solve certifies the polytope is nonempty.
            let r = lp::solve_lp(&set.deviation_lp(0.0))?;
            if r.status != LpStatus::Optimal {
                return Err(Error::InvalidInput("uncertainty set is empty".into()));
            }
        }
        // The nominal rule must always land inside the set.
        let nominal_scenario = set.nominal_scenario();
        if !set.contains(&nominal_scenario, 1e-6) {
            return Err(Error::InvalidInput("nominal scenario falls outside the set".into()));
        }
        Ok(set)
    }

    pub fn scenario_dim(&self) -> usize {
        self.nominal.len()
    }

    pub fn deviation_dim(&self) -> usize {
        self.map.deviation_dim()
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn map(&self) -> &DeviationMap {
        &self.map
    }

    pub fn deviation_bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    pub fn rows(&self) -> &[(Vec<f64>, f64)] {
        &self.rows
    }

    pub fn realize(&self, delta: &[f64]) -> Scenario {
        assert_eq!(delta.len(), self.deviation_dim(), "deviation dimension mismatch");
        let mapped = self.map.apply(delta);
        Scenario::new(
            self.nominal
                .iter()
                .zip(&mapped)
                .map(|(n, d)| n + d)
                .collect(),
        )
    }

    /// Representative scenario used to seed solution pools and to define
    /// the deterministic counterpart: the deviation-box midpoint, scaled
    /// uniformly toward zero until every budget row holds.
    pub fn nominal_scenario(&self) -> Scenario {
        let p = self.deviation_dim();
        let mut delta: Vec<f64> = (0..p).map(|j| 0.5 * (self.lower[j] + self.upper[j])).collect();
        let mut scale = 1.0f64;
        for (a, b) in &self.rows {
            let lhs: f64 = a.iter().zip(&delta).map(|(x, y)| x * y).sum();
            if lhs > *b {
                debug_assert!(lhs > 0.0, "uniform scaling cannot repair this row");
                scale = scale.min((b / lhs).max(0.0));
            }
        }
        if scale < 1.0 {
            for d in &mut delta {
                *d *= scale;
            }
        }
        self.realize(&delta)
    }

    /// Scenario membership within an absolute tolerance.
    pub fn contains(&self, c: &Scenario, tol: f64) -> bool {
        if c.len() != self.scenario_dim() {
            return false;
        }
        if let DeviationMap::Diagonal(d) = &self.map {
            let usable = (0..d.len()).all(|j| {
                d[j] != 0.0
                    || (self.lower[j] <= 0.0
                        && self.upper[j] >= 0.0
                        && self.rows.iter().all(|(a, _)| a[j] >= 0.0))
            });
            if usable {
                let mut delta = vec![0.0; d.len()];
                for j in 0..d.len() {
                    let diff = c.values()[j] - self.nominal[j];
                    if d[j] == 0.0 {
                        if diff.abs() > tol * (1.0 + self.nominal[j].abs()) {
                            return false;
                        }
                    } else {
                        delta[j] = diff / d[j];
                        let slack = tol * (1.0 + delta[j].abs());
                        if delta[j] < self.lower[j] - slack || delta[j] > self.upper[j] + slack {
                            return false;
                        }
                    }
                }
                for (a, b) in &self.rows {
                    let lhs: f64 = a.iter().zip(&delta).map(|(x, y)| x * y).sum();
                    let scale: f64 = 1.0 + a.iter().zip(&delta).map(|(x, y)| (x * y).abs()).sum::<f64>();
                    if lhs > b + tol * scale {
                        return false;
                    }
                }
                return true;
            }
        }
        // General case: LP feasibility for a deviation vector mapping onto c.
        let mut lp = self.deviation_lp(tol.max(lp::FEASIBILITY_TOL));
        let diff: Vec<f64> = c
            .values()
            .iter()
            .zip(&self.nominal)
            .map(|(a, b)| a - b)
            .collect();
        let p = self.deviation_dim();
        match &self.map {
            DeviationMap::Diagonal(d) => {
                for (i, &di) in d.iter().enumerate() {
                    lp.push_row(vec![(i, di)], Relation::Eq, diff[i]);
                }
            }
            DeviationMap::Dense(rows) => {
                for (i, row) in rows.iter().enumerate() {
                    let coefs: Vec<(usize, f64)> =
                        (0..p).filter(|&j| row[j] != 0.0).map(|j| (j, row[j])).collect();
                    lp.push_row(coefs, Relation::Eq, diff[i]);
                }
            }
        }
        matches!(
            lp::solve_lp(&lp),
            Ok(r) if r.status == LpStatus::Optimal
        )
    }

    /// Zero-objective LP over the deviation polytope, with budget rows
    /// relaxed by `slack`.
    fn deviation_lp(&self, slack: f64) -> LpProblem {
        let mut lp = LpProblem::new();
        let p = self.deviation_dim();
        for j in 0..p {
            lp.push_var(0.0, self.lower[j], self.upper[j]);
        }
        for (a, b) in &self.rows {
            let coefs: Vec<(usize, f64)> =
                (0..p).filter(|&j| a[j] != 0.0).map(|j| (j, a[j])).collect();
            lp.push_row(coefs, Relation::Le, b + slack);
        }
        lp
    }
}

/// Partial assignment of first-stage variables inside the search tree.
/// One entry per index keeps the zero-fix and one-fix sets disjoint by
/// construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FixationSet {
    fixed: BTreeMap<usize, bool>,
}

impl FixationSet {
    pub fn empty() -> Self {
        FixationSet::default()
    }

    /// Fixes every coordinate of `x`, pinning the first stage completely.
    pub fn pin_all(x: &[bool]) -> Self {
        FixationSet {
            fixed: x.iter().copied().enumerate().collect(),
        }
    }

    pub fn fix(&mut self, index: usize, value: bool) {
        self.fixed.insert(index, value);
    }

    /// Child fixation extending this one. Refixing an index to a different
    /// value is a search bug.
    pub fn child(&self, index: usize, value: bool) -> Self {
        debug_assert!(
            self.fixed.get(&index).map_or(true, |&v| v == value),
            "contradictory refix of index {index}"
        );
        let mut next = self.clone();
        next.fix(index, value);
        next
    }

    pub fn value(&self, index: usize) -> Option<bool> {
        self.fixed.get(&index).copied()
    }

    pub fn is_fixed(&self, index: usize) -> bool {
        self.fixed.contains_key(&index)
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    /// True when the assignment honors every fixation.
    pub fn admits(&self, x: &[bool]) -> bool {
        self.fixed.iter().all(|(&i, &v)| x.get(i) == Some(&v))
    }

    pub fn free_indices(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| !self.fixed.contains_key(i)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.fixed.iter().map(|(&i, &v)| (i, v))
    }
}

/// Exact deterministic second-stage oracle: given a scenario, returns a
/// minimizer of the canonical objective over all feasible assignments that
/// honor the fixations, or `None` when the fixations admit no assignment.
///
/// The contract is exactness within an absolute `1e-6`: ties may be broken
/// arbitrarily but deterministically, and limit overruns surface as errors,
/// never as approximate answers.
pub trait Oracle: Sync {
    fn solve(&self, c: &Scenario, fix: &FixationSet) -> Result<Option<Solution>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Stub {
        sense: Sense,
    }

    impl Problem for Stub {
        fn first_stage_len(&self) -> usize {
            1
        }
        fn second_stage_len(&self) -> usize {
            1
        }
        fn scenario_len(&self) -> usize {
            1
        }
        fn sense(&self) -> Sense {
            self.sense
        }
        fn objective(&self, x: &[bool], y: &[bool]) -> Result<(f64, Vec<f64>)> {
            // Four assignments with distinct terms.
            Ok(match (x[0], y[0]) {
                (false, false) => (2.0, vec![0.0]),
                (false, true) => (0.0, vec![3.0]),
                (true, false) => (1.5, vec![0.0]),
                (true, true) => (0.5, vec![1.0]),
            })
        }
        fn first_stage_feasible(&self, _x: &[bool]) -> bool {
            true
        }
        fn full_feasible(&self, _x: &[bool], _y: &[bool]) -> bool {
            true
        }
    }

    #[test]
    fn value_is_constant_plus_dot() {
        let p = Stub { sense: Sense::Minimize };
        let z = Solution::new(&p, vec![false], vec![false]).unwrap();
        assert_eq!(z.value(&Scenario::new(vec![0.37])), 2.0);
        let z4 = Solution::new(&p, vec![true], vec![true]).unwrap();
        assert_eq!(z4.value(&Scenario::new(vec![1.0])), 1.5);
        let z2 = Solution::new(&p, vec![false], vec![true]).unwrap();
        assert_eq!(z2.value(&Scenario::new(vec![0.5])), 1.5);
    }

    #[test]
    #[should_panic(expected = "scenario dimension")]
    fn value_rejects_wrong_dimension() {
        let p = Stub { sense: Sense::Minimize };
        let z = Solution::new(&p, vec![false], vec![false]).unwrap();
        z.value(&Scenario::new(vec![1.0, 2.0]));
    }

    #[test]
    fn canonical_negates_only_maximize() {
        let max = Canonical::new(Stub { sense: Sense::Maximize });
        let (g, h) = max.objective(&[true], &[true]).unwrap();
        assert_eq!(g, -0.5);
        assert_eq!(h, vec![-1.0]);
        assert!(max.is_flipped());
        assert_eq!(max.to_native(-1.5), 1.5);

        let min = Canonical::new(Stub { sense: Sense::Minimize });
        let (g, h) = min.objective(&[true], &[true]).unwrap();
        assert_eq!((g, h), (0.5, vec![1.0]));

        // Re-wrapping a canonical problem leaves the terms unchanged.
        let twice = Canonical::new(Canonical::new(Stub { sense: Sense::Maximize }));
        let (g2, h2) = twice.objective(&[true], &[true]).unwrap();
        assert_eq!((g2, h2), (-0.5, vec![-1.0]));
    }

    #[test]
    fn canonical_preserves_argmin_ordering() {
        // The best assignment under the flipped problem is the native argmax.
        let p = Stub { sense: Sense::Maximize };
        let canon = Canonical::new(Stub { sense: Sense::Maximize });
        let c = Scenario::new(vec![0.8]);
        let assignments = [(false, false), (false, true), (true, false), (true, true)];
        let native_best = assignments
            .iter()
            .max_by(|a, b| {
                let va = {
                    let (g, h) = p.objective(&[a.0], &[a.1]).unwrap();
                    g + h[0] * 0.8
                };
                let vb = {
                    let (g, h) = p.objective(&[b.0], &[b.1]).unwrap();
                    g + h[0] * 0.8
                };
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        let canon_best = assignments
            .iter()
            .min_by(|a, b| {
                let va = Solution::new(&canon, vec![a.0], vec![a.1]).unwrap().value(&c);
                let vb = Solution::new(&canon, vec![b.0], vec![b.1]).unwrap().value(&c);
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        assert_eq!(native_best, canon_best);
    }

    #[test]
    fn nominal_scenario_midpoint_rules() {
        // Zero budget collapses onto the nominal point.
        let u = UncertaintySet::budgeted(vec![2.0, 3.0], vec![1.0, 1.0], 0.0).unwrap();
        assert_eq!(u.nominal_scenario().values(), &[2.0, 3.0]);

        // Plain box: midpoint.
        let b = UncertaintySet::interval_box(vec![-1.0, -1.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(b.nominal_scenario().values(), &[0.0, 1.0]);

        // Budget exactly matches the midpoint mass: no scaling.
        let g = UncertaintySet::budgeted(vec![5.0, 7.0], vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(g.nominal_scenario().values(), &[5.5, 7.5]);

        // Budget below midpoint mass: uniform scaling to the budget.
        let s = UncertaintySet::budgeted(vec![0.0, 0.0], vec![2.0, 2.0], 0.5).unwrap();
        let c = s.nominal_scenario();
        assert!((c.values()[0] - 0.5).abs() < 1e-12);
        assert!((c.values()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn membership_checks_box_and_budget() {
        let u = UncertaintySet::budgeted(vec![1.0, 1.0], vec![1.0, 2.0], 1.0).unwrap();
        assert!(u.contains(&Scenario::new(vec![1.5, 2.0]), SCENARIO_MEMBERSHIP_TOL));
        assert!(!u.contains(&Scenario::new(vec![2.0, 3.0]), SCENARIO_MEMBERSHIP_TOL));
        assert!(!u.contains(&Scenario::new(vec![0.5, 1.0]), SCENARIO_MEMBERSHIP_TOL));
        let nominal = u.nominal_scenario();
        assert!(u.contains(&nominal, SCENARIO_MEMBERSHIP_TOL));
    }

    #[test]
    fn crossed_bounds_rejected() {
        assert!(UncertaintySet::interval_box(vec![1.0], vec![0.0]).is_err());
        assert!(UncertaintySet::budgeted(vec![1.0], vec![-0.5], 1.0).is_err());
    }

    #[test]
    fn fixations_stay_disjoint_and_filter() {
        let mut f = FixationSet::empty();
        f.fix(2, true);
        f.fix(0, false);
        assert!(f.admits(&[false, true, true]));
        assert!(!f.admits(&[true, true, true]));
        assert_eq!(f.free_indices(4), vec![1, 3]);
        let child = f.child(1, true);
        assert_eq!(child.len(), 3);
        assert!(f.len() == 2);
        // Refixing to the same value is a no-op.
        f.fix(2, true);
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn pin_all_covers_every_index() {
        let f = FixationSet::pin_all(&[true, false, true]);
        assert_eq!(f.len(), 3);
        assert!(f.admits(&[true, false, true]));
        assert!(!f.admits(&[true, false, false]));
        assert_eq!(f.free_indices(3), Vec::<usize>::new());
    }

    proptest::proptest! {
        #[test]
        fn value_is_affine_in_scenario(
            gv in -5.0f64..5.0,
            h in proptest::collection::vec(-5.0f64..5.0, 3),
            c1 in proptest::collection::vec(-2.0f64..2.0, 3),
            c2 in proptest::collection::vec(-2.0f64..2.0, 3),
            t in 0.0f64..1.0,
        ) {
            let z = Solution { x: vec![true], y: vec![], base_cost: gv, scenario_cost: h };
            let mix: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + t * (b - a)).collect();
            let lhs = z.value(&Scenario::new(mix));
            let rhs = z.value(&Scenario::new(c1.clone()))
                + t * (z.value(&Scenario::new(c2.clone())) - z.value(&Scenario::new(c1)));
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
