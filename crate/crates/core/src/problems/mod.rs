//! Problem families the solver stack is instantiated with.

pub mod capital_budgeting;
pub mod explicit;
pub mod sahlp;

use crate::error::{Error, Result};
use crate::model::{FixationSet, Oracle, Problem, Scenario, Sense, Solution};

/// Reference oracle that enumerates assignments outright.
///
/// Intended for small instances and for cross-checking structured oracles;
/// refuses anything with more than 20 variables per stage. Expects a
/// minimize-sense view (wrap maximize problems in `Canonical` first).
/// Ties break toward the earliest assignment in enumeration order, where
/// index 0 is the least significant bit.
pub struct ExhaustiveOracle<'a, P: Problem> {
    problem: &'a P,
}

impl<'a, P: Problem> ExhaustiveOracle<'a, P> {
    pub fn new(problem: &'a P) -> Result<Self> {
        if problem.sense() != Sense::Minimize {
            return Err(Error::InvalidInput(
                "exhaustive oracle needs a minimize-sense problem".into(),
            ));
        }
        if problem.first_stage_len() > 20 {
            return Err(Error::InvalidInput(
                "exhaustive oracle is limited to 20 first-stage variables".into(),
            ));
        }
        let structured = problem
            .second_stage_candidates(&vec![false; problem.first_stage_len()])
            .is_some();
        if !structured && problem.second_stage_len() > 20 {
            return Err(Error::InvalidInput(
                "exhaustive oracle needs a recourse listing above 20 second-stage variables".into(),
            ));
        }
        Ok(ExhaustiveOracle { problem })
    }
}

fn mask_to_bits(mask: u32, len: usize) -> Vec<bool> {
    (0..len).map(|i| (mask >> i) & 1 == 1).collect()
}

impl<P: Problem> Oracle for ExhaustiveOracle<'_, P> {
    fn solve(&self, c: &Scenario, fix: &FixationSet) -> Result<Option<Solution>> {
        let n1 = self.problem.first_stage_len();
        let n2 = self.problem.second_stage_len();
        let mut best: Option<(f64, Solution)> = None;
        for xmask in 0..(1u32 << n1) {
            let x = mask_to_bits(xmask, n1);
            if !fix.admits(&x) || !self.problem.first_stage_feasible(&x) {
                continue;
            }
            let candidates = self.problem.second_stage_candidates(&x);
            let mut consider = |y: Vec<bool>| -> Result<()> {
                if !self.problem.full_feasible(&x, &y) {
                    return Ok(());
                }
                let sol = Solution::new(self.problem, x.clone(), y)?;
                let v = sol.value(c);
                if best.as_ref().map_or(true, |(b, _)| v < *b) {
                    best = Some((v, sol));
                }
                Ok(())
            };
            match candidates {
                Some(ys) => {
                    for y in ys {
                        consider(y)?;
                    }
                }
                None => {
                    if n2 > 20 {
                        return Err(Error::InvalidInput(
                            "recourse listing vanished on a large second stage".into(),
                        ));
                    }
                    for ymask in 0..(1u32 << n2) {
                        consider(mask_to_bits(ymask, n2))?;
                    }
                }
            }
        }
        Ok(best.map(|(_, sol)| sol))
    }
}

#[cfg(test)]
mod tests {
    use super::explicit::ExplicitInstance;
    use super::*;
    use crate::model::{Canonical, FixationSet, Scenario};

    #[test]
    fn exhaustive_finds_the_toy_minimizer() {
        let (inst, _) = ExplicitInstance::toy();
        let oracle = ExhaustiveOracle::new(&inst).unwrap();
        // At the box midpoint both stages prefer the all-ones assignment.
        let sol = oracle
            .solve(&Scenario::new(vec![0.5]), &FixationSet::empty())
            .unwrap()
            .unwrap();
        assert_eq!(sol.x, vec![true]);
        assert_eq!(sol.y, vec![true]);
        assert!((sol.value(&Scenario::new(vec![0.5])) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixations_restrict_the_scan() {
        let (inst, _) = ExplicitInstance::toy();
        let oracle = ExhaustiveOracle::new(&inst).unwrap();
        let mut fix = FixationSet::empty();
        fix.fix(0, false);
        let sol = oracle.solve(&Scenario::new(vec![0.5]), &fix).unwrap().unwrap();
        assert_eq!(sol.x, vec![false]);
        assert_eq!(sol.y, vec![true]);
    }

    #[test]
    fn maximize_problems_are_rejected_until_canonicalized() {
        let (inst, _) = ExplicitInstance::toy_maximize();
        assert!(ExhaustiveOracle::new(&inst).is_err());
        let canon = Canonical::new(inst);
        assert!(ExhaustiveOracle::new(&canon).is_ok());
    }
}
