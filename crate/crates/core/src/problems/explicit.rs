//! Table-driven problem family: every feasible assignment is listed
//! outright with its cost terms. Used for hand-checkable fixtures and for
//! randomized cross-validation of the structured families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ccg::{CcgEncode, MasterBuilder};
use crate::error::{Error, Result};
use crate::lp::Relation;
use crate::model::{Problem, Scenario, Sense, UncertaintySet};

/// One feasible assignment with its scenario-independent cost and the
/// coefficients multiplying the scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitEntry {
    pub x: Vec<bool>,
    pub y: Vec<bool>,
    pub base: f64,
    pub scenario: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ExplicitInstance {
    first_stage: usize,
    second_stage: usize,
    scenario_dim: usize,
    sense: Sense,
    entries: Vec<ExplicitEntry>,
}

impl ExplicitInstance {
    pub fn new(
        first_stage: usize,
        second_stage: usize,
        scenario_dim: usize,
        sense: Sense,
        entries: Vec<ExplicitEntry>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("explicit instance needs at least one entry".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.x.len() != first_stage || e.y.len() != second_stage {
                return Err(Error::InvalidInput(format!("entry {i} has mismatched stage sizes")));
            }
            if e.scenario.len() != scenario_dim {
                return Err(Error::InvalidInput(format!("entry {i} has mismatched scenario size")));
            }
            if !e.base.is_finite() || e.scenario.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("entry {i} has non-finite costs")));
            }
        }
        for (i, a) in entries.iter().enumerate() {
            for b in entries.iter().skip(i + 1) {
                if a.x == b.x && a.y == b.y {
                    return Err(Error::InvalidInput("duplicate assignment in explicit table".into()));
                }
            }
        }
        Ok(ExplicitInstance { first_stage, second_stage, scenario_dim, sense, entries })
    }

    pub fn entries(&self) -> &[ExplicitEntry] {
        &self.entries
    }

    fn lookup(&self, x: &[bool], y: &[bool]) -> Option<&ExplicitEntry> {
        self.entries.iter().find(|e| e.x == x && e.y == y)
    }

    /// One first-stage bit, one recourse bit, one scenario coordinate over
    /// the box [0, 1]. Optimum 1.5 at x = 1 under the worst case c = 1;
    /// committing x = 0 costs 2 in its worst case.
    pub fn toy() -> (Self, UncertaintySet) {
        let entries = vec![
            ExplicitEntry { x: vec![false], y: vec![false], base: 2.0, scenario: vec![0.0] },
            ExplicitEntry { x: vec![false], y: vec![true], base: 0.0, scenario: vec![3.0] },
            ExplicitEntry { x: vec![true], y: vec![false], base: 1.5, scenario: vec![0.0] },
            ExplicitEntry { x: vec![true], y: vec![true], base: 0.5, scenario: vec![1.0] },
        ];
        let inst = ExplicitInstance::new(1, 1, 1, Sense::Minimize, entries).unwrap();
        let set = UncertaintySet::interval_box(vec![0.0], vec![1.0]).unwrap();
        (inst, set)
    }

    /// The toy restated in maximize sense (all costs negated), for
    /// exercising the canonicalization path.
    pub fn toy_maximize() -> (Self, UncertaintySet) {
        let (toy, set) = Self::toy();
        let entries = toy
            .entries
            .into_iter()
            .map(|e| ExplicitEntry {
                x: e.x,
                y: e.y,
                base: -e.base,
                scenario: e.scenario.into_iter().map(|v| -v).collect(),
            })
            .collect();
        let inst = ExplicitInstance::new(1, 1, 1, Sense::Maximize, entries).unwrap();
        (inst, set)
    }

    /// Seeded random instance over a budgeted scenario set. Roughly a
    /// quarter of all assignments are dropped, so some first-stage vectors
    /// can end up infeasible; at least one entry always survives.
    pub fn random(seed: u64, first_stage: usize, second_stage: usize, scenario_dim: usize) -> (Self, UncertaintySet) {
        assert!(first_stage <= 8 && second_stage <= 8, "random tables are for small tests");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for xmask in 0u32..(1 << first_stage) {
            for ymask in 0u32..(1 << second_stage) {
                let keep = rng.gen::<f64>() >= 0.25;
                let base = rng.gen_range(-5.0..5.0);
                let scenario: Vec<f64> = (0..scenario_dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
                if !keep && !(xmask == 0 && ymask == 0) {
                    continue;
                }
                entries.push(ExplicitEntry {
                    x: (0..first_stage).map(|i| (xmask >> i) & 1 == 1).collect(),
                    y: (0..second_stage).map(|i| (ymask >> i) & 1 == 1).collect(),
                    base,
                    scenario,
                });
            }
        }
        let inst = ExplicitInstance::new(first_stage, second_stage, scenario_dim, Sense::Minimize, entries).unwrap();
        let nominal: Vec<f64> = (0..scenario_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let deviations: Vec<f64> = (0..scenario_dim).map(|_| rng.gen_range(0.2..1.2)).collect();
        let gamma = (scenario_dim as f64 * 0.5).max(0.5);
        let set = UncertaintySet::budgeted(nominal, deviations, gamma).unwrap();
        (inst, set)
    }
}

impl Problem for ExplicitInstance {
    fn first_stage_len(&self) -> usize {
        self.first_stage
    }

    fn second_stage_len(&self) -> usize {
        self.second_stage
    }

    fn scenario_len(&self) -> usize {
        self.scenario_dim
    }

    fn sense(&self) -> Sense {
        self.sense
    }

    fn objective(&self, x: &[bool], y: &[bool]) -> Result<(f64, Vec<f64>)> {
        self.lookup(x, y)
            .map(|e| (e.base, e.scenario.clone()))
            .ok_or_else(|| Error::InvalidInput("assignment not present in explicit table".into()))
    }

    fn first_stage_feasible(&self, x: &[bool]) -> bool {
        self.entries.iter().any(|e| e.x == x)
    }

    fn full_feasible(&self, x: &[bool], y: &[bool]) -> bool {
        self.lookup(x, y).is_some()
    }

    fn second_stage_candidates(&self, x: &[bool]) -> Option<Vec<Vec<bool>>> {
        Some(
            self.entries
                .iter()
                .filter(|e| e.x == x)
                .map(|e| e.y.clone())
                .collect(),
        )
    }
}

impl CcgEncode for ExplicitInstance {
    fn first_stage_rows(&self, _b: &mut MasterBuilder, _x: &[usize]) -> Result<()> {
        // Membership in X is enforced by each block's selector rows.
        Ok(())
    }

    fn scenario_block(&self, b: &mut MasterBuilder, x: &[usize], mu: usize, c: &Scenario) -> Result<Vec<usize>> {
        // One selector per table entry; the chosen entry dictates x, y, and
        // the cost bounded by mu.
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let selectors: Vec<usize> = self.entries.iter().map(|_| b.binary()).collect();
        b.row(selectors.iter().map(|&s| (s, 1.0)).collect(), Relation::Eq, 1.0);
        for (j, &xj) in x.iter().enumerate() {
            let mut coefs = vec![(xj, 1.0)];
            coefs.extend(
                self.entries
                    .iter()
                    .zip(&selectors)
                    .filter(|(e, _)| e.x[j])
                    .map(|(_, &s)| (s, -1.0)),
            );
            b.row(coefs, Relation::Eq, 0.0);
        }
        let mut y_vars = Vec::with_capacity(self.second_stage);
        for j in 0..self.second_stage {
            let yj = b.continuous(0.0, 1.0);
            let mut coefs = vec![(yj, 1.0)];
            coefs.extend(
                self.entries
                    .iter()
                    .zip(&selectors)
                    .filter(|(e, _)| e.y[j])
                    .map(|(_, &s)| (s, -1.0)),
            );
            b.row(coefs, Relation::Eq, 0.0);
            y_vars.push(yj);
        }
        let mut epigraph = vec![(mu, 1.0)];
        for (e, &s) in self.entries.iter().zip(&selectors) {
            let cost = sign
                * (e.base + e.scenario.iter().zip(c.values()).map(|(a, v)| a * v).sum::<f64>());
            if cost != 0.0 {
                epigraph.push((s, -cost));
            }
        }
        b.row(epigraph, Relation::Ge, 0.0);
        Ok(y_vars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_terms_are_as_documented() {
        let (inst, set) = ExplicitInstance::toy();
        assert_eq!(inst.first_stage_len(), 1);
        assert_eq!(inst.second_stage_len(), 1);
        assert_eq!(inst.scenario_len(), 1);
        assert_eq!(inst.sense(), Sense::Minimize);
        let (g, h) = inst.objective(&[true], &[true]).unwrap();
        assert_eq!((g, h), (0.5, vec![1.0]));
        let (g, h) = inst.objective(&[false], &[true]).unwrap();
        assert_eq!((g, h), (0.0, vec![3.0]));
        assert_eq!(set.nominal_scenario().values(), &[0.5]);
    }

    #[test]
    fn absent_assignment_is_an_error() {
        let entries = vec![ExplicitEntry { x: vec![true], y: vec![false], base: 1.0, scenario: vec![0.0] }];
        let inst = ExplicitInstance::new(1, 1, 1, Sense::Minimize, entries).unwrap();
        assert!(inst.objective(&[false], &[false]).is_err());
        assert!(!inst.full_feasible(&[false], &[false]));
        assert!(!inst.first_stage_feasible(&[false]));
        assert!(inst.second_stage_candidates(&[false]).unwrap().is_empty());
    }

    #[test]
    fn candidates_cover_exactly_the_listed_recourse() {
        let (inst, _) = ExplicitInstance::toy();
        let ys = inst.second_stage_candidates(&[true]).unwrap();
        assert_eq!(ys, vec![vec![false], vec![true]]);
    }

    #[test]
    fn duplicate_and_misshapen_entries_are_rejected() {
        let dup = vec![
            ExplicitEntry { x: vec![true], y: vec![true], base: 1.0, scenario: vec![0.0] },
            ExplicitEntry { x: vec![true], y: vec![true], base: 2.0, scenario: vec![1.0] },
        ];
        assert!(ExplicitInstance::new(1, 1, 1, Sense::Minimize, dup).is_err());
        let bad_dim = vec![ExplicitEntry { x: vec![true, false], y: vec![true], base: 1.0, scenario: vec![0.0] }];
        assert!(ExplicitInstance::new(1, 1, 1, Sense::Minimize, bad_dim).is_err());
    }

    #[test]
    fn random_tables_are_seed_deterministic() {
        let (a, _) = ExplicitInstance::random(7, 3, 2, 2);
        let (b, _) = ExplicitInstance::random(7, 3, 2, 2);
        assert_eq!(a.entries(), b.entries());
        let (c, _) = ExplicitInstance::random(8, 3, 2, 2);
        assert_ne!(a.entries(), c.entries());
        assert!(!a.entries().is_empty());
    }
}
