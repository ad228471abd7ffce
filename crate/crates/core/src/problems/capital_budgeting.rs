//! Capital budgeting with deferral and loans under factor-driven profits.
//!
//! Projects are taken now (full profit) or after observing the factors
//! (discounted by the deferral factor); each stage may additionally take
//! out a loan that widens its budget. Profit of project `i` scales with
//! `1 + 0.5 * Q_i . xi`, so the objective is linear in the factor vector.
//!
//! Stage vectors append the loan flag after the projects: index `n` of the
//! first stage is the now-loan, index `n` of the second stage the
//! later-loan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ccg::{CcgEncode, MasterBuilder};
use crate::error::{Error, Result};
use crate::lp::{LpProblem, Relation};
use crate::mip::{solve_mip, MipLimits, MipProblem, MipStatus};
use crate::model::{
    Canonical, FixationSet, Oracle, Problem, Scenario, Sense, Solution, UncertaintySet,
};

const BUDGET_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct CbInstance {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    profit: Vec<f64>,
    /// Factor loadings, row-major n x m.
    loading: Vec<f64>,
    defer_factor: f64,
    budget: f64,
    loan1: f64,
    loan2: f64,
    loan_cost: f64,
    loan_premium: f64,
}

impl CbInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        cost: Vec<f64>,
        profit: Vec<f64>,
        loading: Vec<f64>,
        defer_factor: f64,
        budget: f64,
        loan1: f64,
        loan2: f64,
        loan_cost: f64,
        loan_premium: f64,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput("need at least one project and one factor".into()));
        }
        if cost.len() != n || profit.len() != n || loading.len() != n * m {
            return Err(Error::InvalidInput("data sizes do not match the project count".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !finite(&cost) || !finite(&profit) || !finite(&loading) {
            return Err(Error::InvalidInput("instance data must be finite".into()));
        }
        if cost.iter().any(|&a| a < 0.0) || profit.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidInput("costs and profits must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&defer_factor) {
            return Err(Error::InvalidInput("deferral factor must lie in [0, 1)".into()));
        }
        if loan_premium <= 1.0 {
            return Err(Error::InvalidInput("the later loan must cost a premium above one".into()));
        }
        for v in [budget, loan1, loan2, loan_cost] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput("budget and loan terms must be nonnegative".into()));
            }
        }
        Ok(CbInstance {
            n,
            m,
            cost,
            profit,
            loading,
            defer_factor,
            budget,
            loan1,
            loan2,
            loan_cost,
            loan_premium,
        })
    }

    /// Random instance: costs uniform in [1, 10], profits a fifth of cost
    /// with 20% noise, unit-sum nonnegative factor loadings, budget at 45%
    /// of total cost with loans worth 20% each.
    pub fn random(seed: u64, n: usize, m: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
        let profit: Vec<f64> = cost.iter().map(|c| c / 5.0 * rng.gen_range(0.8..1.2)).collect();
        let mut loading = vec![0.0; n * m];
        for i in 0..n {
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for r in 0..m {
                loading[i * m + r] = raw[r] / total;
            }
        }
        let total_cost: f64 = cost.iter().sum();
        CbInstance::new(
            n,
            m,
            cost,
            profit,
            loading,
            0.8,
            0.45 * total_cost,
            0.2 * total_cost,
            0.2 * total_cost,
            0.025 * total_cost,
            1.2,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn uncertainty_set(&self) -> UncertaintySet {
        UncertaintySet::interval_box(vec![-1.0; self.m], vec![1.0; self.m])
            .expect("unit box construction cannot fail")
    }

    /// Realized profit of each project under factor values `c`.
    fn scenario_profit(&self, c: &Scenario) -> Result<Vec<f64>> {
        if c.len() != self.m {
            return Err(Error::InvalidInput("scenario is not a factor vector".into()));
        }
        if c.values().iter().any(|&v| v.abs() > 1.0 + 1e-6) {
            return Err(Error::InvalidInput("factor values must lie in [-1, 1]".into()));
        }
        Ok((0..self.n)
            .map(|i| {
                let swing: f64 = (0..self.m).map(|r| self.loading[i * self.m + r] * c.values()[r]).sum();
                (1.0 + 0.5 * swing) * self.profit[i]
            })
            .collect())
    }

    fn spend(&self, flags: &[bool]) -> f64 {
        (0..self.n).filter(|&i| flags[i]).map(|i| self.cost[i]).sum()
    }
}

impl Problem for CbInstance {
    fn first_stage_len(&self) -> usize {
        self.n + 1
    }

    fn second_stage_len(&self) -> usize {
        self.n + 1
    }

    fn scenario_len(&self) -> usize {
        self.m
    }

    fn sense(&self) -> Sense {
        Sense::Maximize
    }

    fn objective(&self, x: &[bool], y: &[bool]) -> Result<(f64, Vec<f64>)> {
        if !self.full_feasible(x, y) {
            return Err(Error::InvalidInput("investment plan violates the budgets".into()));
        }
        let n = self.n;
        let mut g = 0.0;
        if x[n] {
            g -= self.loan_cost;
        }
        if y[n] {
            g -= self.loan_cost * self.loan_premium;
        }
        let mut h = vec![0.0; self.m];
        for i in 0..n {
            let weight = match (x[i], y[i]) {
                (true, _) => 1.0,
                (false, true) => self.defer_factor,
                (false, false) => continue,
            };
            g += weight * self.profit[i];
            for r in 0..self.m {
                h[r] += 0.5 * self.loading[i * self.m + r] * self.profit[i] * weight;
            }
        }
        Ok((g, h))
    }

    fn first_stage_feasible(&self, x: &[bool]) -> bool {
        if x.len() != self.n + 1 {
            return false;
        }
        let cap = self.budget + if x[self.n] { self.loan1 } else { 0.0 };
        self.spend(x) <= cap + BUDGET_TOL
    }

    fn full_feasible(&self, x: &[bool], y: &[bool]) -> bool {
        if y.len() != self.n + 1 || !self.first_stage_feasible(x) {
            return false;
        }
        if (0..self.n).any(|i| x[i] && y[i]) {
            return false;
        }
        let mut cap = self.budget;
        if x[self.n] {
            cap += self.loan1;
        }
        if y[self.n] {
            cap += self.loan2;
        }
        self.spend(x) + self.spend(y) <= cap + BUDGET_TOL
    }
}

/// Deterministic oracle: one small MIP over both stages at a fixed factor
/// vector (the inner maximization collapses when the scenario is known).
pub struct CbMipOracle<'a> {
    canon: &'a Canonical<CbInstance>,
}

impl<'a> CbMipOracle<'a> {
    pub fn new(canon: &'a Canonical<CbInstance>) -> Self {
        CbMipOracle { canon }
    }
}

impl Oracle for CbMipOracle<'_> {
    fn solve(&self, c: &Scenario, fix: &FixationSet) -> Result<Option<Solution>> {
        let inst = self.canon.inner();
        let n = inst.n;
        let pi = inst.scenario_profit(c)?;
        let mut lp = LpProblem::new();
        // Variable order: x projects, now-loan, y projects, later-loan.
        for i in 0..n {
            lp.push_var(pi[i], 0.0, 1.0);
        }
        lp.push_var(-inst.loan_cost, 0.0, 1.0);
        for i in 0..n {
            lp.push_var(inst.defer_factor * pi[i], 0.0, 1.0);
        }
        lp.push_var(-inst.loan_cost * inst.loan_premium, 0.0, 1.0);
        let x0 = n;
        let y_base = n + 1;
        let y0 = 2 * n + 1;
        let mut first: Vec<(usize, f64)> = (0..n).map(|i| (i, inst.cost[i])).collect();
        first.push((x0, -inst.loan1));
        lp.push_row(first, Relation::Le, inst.budget);
        let mut both: Vec<(usize, f64)> = (0..n)
            .flat_map(|i| [(i, inst.cost[i]), (y_base + i, inst.cost[i])])
            .collect();
        both.push((x0, -inst.loan1));
        both.push((y0, -inst.loan2));
        lp.push_row(both, Relation::Le, inst.budget);
        for i in 0..n {
            lp.push_row(vec![(i, 1.0), (y_base + i, 1.0)], Relation::Le, 1.0);
        }
        for (index, value) in fix.iter() {
            if index > n {
                return Err(Error::InvalidInput("fixation outside the first stage".into()));
            }
            let v = if value { 1.0 } else { 0.0 };
            lp.lower[index] = v;
            lp.upper[index] = v;
        }
        let binaries: Vec<usize> = (0..2 * n + 2).collect();
        let r = solve_mip(&MipProblem { lp, binaries }, &MipLimits::default())?;
        match r.status {
            MipStatus::Infeasible => Ok(None),
            MipStatus::LimitReached => Err(Error::LimitReached("budgeting oracle hit a limit".into())),
            MipStatus::Optimal => {
                let x: Vec<bool> = (0..=n).map(|j| r.assignment[j] > 0.5).collect();
                let y: Vec<bool> = (0..=n).map(|j| r.assignment[y_base + j] > 0.5).collect();
                Ok(Some(Solution::new(self.canon, x, y)?))
            }
        }
    }
}

impl CcgEncode for CbInstance {
    fn first_stage_rows(&self, b: &mut MasterBuilder, x: &[usize]) -> Result<()> {
        let mut row: Vec<(usize, f64)> = (0..self.n).map(|i| (x[i], self.cost[i])).collect();
        row.push((x[self.n], -self.loan1));
        b.row(row, Relation::Le, self.budget);
        Ok(())
    }

    fn scenario_block(
        &self,
        b: &mut MasterBuilder,
        x: &[usize],
        mu: usize,
        c: &Scenario,
    ) -> Result<Vec<usize>> {
        let n = self.n;
        let pi = self.scenario_profit(c)?;
        let y: Vec<usize> = (0..=n).map(|_| b.binary()).collect();
        let mut both: Vec<(usize, f64)> = (0..n)
            .flat_map(|i| [(x[i], self.cost[i]), (y[i], self.cost[i])])
            .collect();
        both.push((x[n], -self.loan1));
        both.push((y[n], -self.loan2));
        b.row(both, Relation::Le, self.budget);
        for i in 0..n {
            b.row(vec![(x[i], 1.0), (y[i], 1.0)], Relation::Le, 1.0);
        }
        // Canonical epigraph: mu bounds the negated profit from below.
        let mut epigraph = vec![(mu, 1.0), (x[n], -self.loan_cost), (y[n], -self.loan_cost * self.loan_premium)];
        for i in 0..n {
            epigraph.push((x[i], pi[i]));
            epigraph.push((y[i], self.defer_factor * pi[i]));
        }
        b.row(epigraph, Relation::Ge, 0.0);
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccg::build_master;
    use crate::problems::ExhaustiveOracle;

    fn single_project() -> CbInstance {
        CbInstance::new(1, 1, vec![4.0], vec![10.0], vec![1.0], 0.5, 4.0, 2.0, 2.0, 1.0, 1.5)
            .unwrap()
    }

    #[test]
    fn nominal_value_is_profit_minus_loans() {
        let inst = single_project();
        let zero = Scenario::new(vec![0.0]);
        let (g, h) = inst.objective(&[true, false], &[false, false]).unwrap();
        assert!((g - 10.0).abs() < 1e-12);
        assert!((h[0] - 5.0).abs() < 1e-12);
        let sol = Solution::new(&inst, vec![true, false], vec![false, false]).unwrap();
        assert!((sol.value(&zero) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn deferral_discounts_profit_and_loading() {
        let inst = single_project();
        let (g, h) = inst.objective(&[false, false], &[true, false]).unwrap();
        assert!((g - 5.0).abs() < 1e-12);
        assert!((h[0] - 2.5).abs() < 1e-12);
        let (g, h) = inst.objective(&[false, true], &[true, true]).unwrap();
        // Deferred project plus both loans: 5 - 1 - 1 * 1.5.
        assert!((g - (5.0 - 1.0 - 1.5)).abs() < 1e-12);
        assert!((h[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn budgets_gate_feasibility() {
        let inst = single_project();
        assert!(inst.first_stage_feasible(&[true, false]));
        let tight = CbInstance::new(1, 1, vec![5.0], vec![10.0], vec![1.0], 0.5, 4.0, 2.0, 2.0, 1.0, 1.5)
            .unwrap();
        assert!(!tight.first_stage_feasible(&[true, false]));
        assert!(tight.first_stage_feasible(&[true, true]));
        assert!(!tight.full_feasible(&[true, true], &[true, false]));
        let two = CbInstance::random(3, 2, 2).unwrap();
        // A project cannot be taken in both stages.
        assert!(!two.full_feasible(&[true, false, false], &[true, false, false]));
    }

    #[test]
    fn canonical_view_negates_values() {
        let inst = CbInstance::random(17, 3, 2).unwrap();
        let canon = Canonical::new(inst.clone());
        let x = vec![true, false, false, false];
        let y = vec![false, true, false, false];
        let c = Scenario::new(vec![0.3, -0.7]);
        if inst.full_feasible(&x, &y) {
            let native = Solution::new(&inst, x.clone(), y.clone()).unwrap().value(&c);
            let flipped = Solution::new(&canon, x, y).unwrap().value(&c);
            assert!((native + flipped).abs() < 1e-12);
        }
    }

    #[test]
    fn rich_budget_takes_every_project_now() {
        let inst =
            CbInstance::new(3, 2, vec![1.0; 3], vec![2.0, 3.0, 4.0], vec![0.5; 6], 0.8, 100.0, 1.0, 1.0, 0.5, 1.5)
                .unwrap();
        let canon = Canonical::new(inst);
        let oracle = CbMipOracle::new(&canon);
        let zero = Scenario::new(vec![0.0, 0.0]);
        let sol = oracle.solve(&zero, &FixationSet::empty()).unwrap().unwrap();
        assert_eq!(sol.x, vec![true, true, true, false]);
        assert_eq!(sol.y, vec![false, false, false, false]);
        assert!((sol.value(&zero) + 9.0).abs() < 1e-9);
    }

    #[test]
    fn blocked_projects_leave_loans_idle() {
        // Zero deferral profit: with every project pinned away nothing can
        // earn, so the optimum is to stay idle at value zero.
        let inst =
            CbInstance::new(2, 1, vec![1.0, 1.0], vec![5.0, 6.0], vec![1.0, 1.0], 0.0, 3.0, 1.0, 1.0, 0.5, 1.5)
                .unwrap();
        let canon = Canonical::new(inst);
        let oracle = CbMipOracle::new(&canon);
        let zero = Scenario::new(vec![0.0]);
        let mut fix = FixationSet::empty();
        fix.fix(0, false);
        fix.fix(1, false);
        let sol = oracle.solve(&zero, &fix).unwrap().unwrap();
        assert!((sol.value(&zero) - 0.0).abs() < 1e-9);
        assert!(!sol.x[2] && !sol.y[2]);
    }

    #[test]
    fn infeasible_fixation_returns_none() {
        let inst = single_project();
        let canon = Canonical::new(inst);
        let oracle = CbMipOracle::new(&canon);
        let zero = Scenario::new(vec![0.0]);
        let mut fix = FixationSet::empty();
        fix.fix(0, true);
        fix.fix(1, false);
        // Cost 4 fits the budget exactly, so force the loan off and shrink
        // the budget via a tighter sibling instance instead.
        let tight = CbInstance::new(1, 1, vec![5.0], vec![10.0], vec![1.0], 0.5, 4.0, 0.5, 0.5, 1.0, 1.5)
            .unwrap();
        let tight_canon = Canonical::new(tight);
        let tight_oracle = CbMipOracle::new(&tight_canon);
        assert!(tight_oracle.solve(&zero, &fix).unwrap().is_none());
        assert!(oracle.solve(&zero, &fix).unwrap().is_some());
    }

    #[test]
    fn mip_oracle_matches_enumeration() {
        for seed in [1u64, 2, 3] {
            let inst = CbInstance::random(seed, 4, 2).unwrap();
            let set = inst.uncertainty_set();
            let canon = Canonical::new(inst);
            let mip = CbMipOracle::new(&canon);
            let enumeration = ExhaustiveOracle::new(&canon).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut fix = FixationSet::empty();
            fix.fix(1, false);
            fix.fix(4, false);
            for _ in 0..8 {
                let c = crate::bench::sample_scenario(&set, &mut rng).unwrap();
                for f in [&FixationSet::empty(), &fix] {
                    let a = mip.solve(&c, f).unwrap().unwrap();
                    let b = enumeration.solve(&c, f).unwrap().unwrap();
                    assert!((a.value(&c) - b.value(&c)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn single_scenario_master_agrees_with_the_oracle() {
        let inst = CbInstance::random(29, 3, 2).unwrap();
        let set = inst.uncertainty_set();
        let canon = Canonical::new(inst);
        let nominal = set.nominal_scenario();
        let (mip, _, _, _) = build_master(&canon, std::slice::from_ref(&nominal)).unwrap();
        let r = solve_mip(&mip, &MipLimits::default()).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        let oracle = CbMipOracle::new(&canon);
        let sol = oracle.solve(&nominal, &FixationSet::empty()).unwrap().unwrap();
        assert!((-r.objective - sol.value(&nominal)).abs() < 1e-6);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = CbInstance::random(5, 4, 2).unwrap();
        let b = CbInstance::random(5, 4, 2).unwrap();
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.profit, b.profit);
        assert_eq!(a.loading, b.loading);
        for i in 0..4 {
            let row: f64 = a.loading[i * 2..(i + 1) * 2].iter().sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
    }
}
