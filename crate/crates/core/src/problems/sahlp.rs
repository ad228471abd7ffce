//! Single-allocation hub location with uncertain flows.
//!
//! First stage opens hubs, second stage allocates every node to exactly one
//! open hub. Costs decompose per flow unit, so the objective is linear in
//! the flow matrix: collection and distribution legs priced by the node-hub
//! distance, the inter-hub leg discounted by `alpha`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ccg::{CcgEncode, MasterBuilder};
use crate::error::{Error, Result};
use crate::lp::{LpProblem, Relation, INF};
use crate::mip::{solve_mip, MipLimits, MipProblem, MipStatus};
use crate::model::{
    Canonical, FixationSet, Oracle, Problem, Scenario, Sense, Solution, UncertaintySet,
};

/// Allocation listings above this many entries are withheld so generic
/// enumeration callers refuse instead of thrashing.
const CANDIDATE_CAP: usize = 200_000;

/// Flow matrices are read row-major: entry `(i, j)` is the flow from `i`
/// to `j`, and scenario vectors use the same layout.
#[derive(Clone, Debug)]
pub struct SahlpInstance {
    n: usize,
    d: Vec<f64>,
    w_bar: Vec<f64>,
    w_hat: Vec<f64>,
    setup: Vec<f64>,
    chi: f64,
    alpha: f64,
    delta_cost: f64,
    gamma: f64,
}

impl SahlpInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        d: Vec<f64>,
        w_bar: Vec<f64>,
        w_hat: Vec<f64>,
        setup: Vec<f64>,
        chi: f64,
        alpha: f64,
        delta_cost: f64,
        gamma: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("need at least one node".into()));
        }
        if d.len() != n * n || w_bar.len() != n * n || w_hat.len() != n * n || setup.len() != n {
            return Err(Error::InvalidInput("matrix sizes do not match the node count".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !finite(&d) || !finite(&w_bar) || !finite(&w_hat) || !finite(&setup) {
            return Err(Error::InvalidInput("instance data must be finite".into()));
        }
        if d.iter().any(|&a| a < 0.0) || w_bar.iter().any(|&a| a < 0.0) || w_hat.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidInput("distances and flows must be nonnegative".into()));
        }
        for v in [chi, alpha, delta_cost, gamma] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput("cost factors and budget must be nonnegative".into()));
            }
        }
        Ok(SahlpInstance { n, d, w_bar, w_hat, setup, chi, alpha, delta_cost, gamma })
    }

    /// Random Euclidean instance: nodes in a 10x10 square, flows uniform in
    /// [1, 10] off the diagonal, deviations uniform in
    /// [0, deviation_mult * flow], setup 15*ln(outflow), budget
    /// floor(gamma_frac * n^2).
    pub fn random(seed: u64, n: usize, gamma_frac: f64, deviation_mult: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("random instances need at least two nodes".into()));
        }
        if !(0.0..=1.0).contains(&gamma_frac) || deviation_mult < 0.0 {
            return Err(Error::InvalidInput("bad generator parameters".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (xi, yi) = coords[i];
                let (xj, yj) = coords[j];
                d[i * n + j] = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            }
        }
        let mut w_bar = vec![0.0; n * n];
        let mut w_hat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let w = rng.gen_range(1.0..10.0);
                    w_bar[i * n + j] = w;
                    w_hat[i * n + j] = rng.gen_range(0.0..deviation_mult.max(1e-12) * w);
                }
            }
        }
        let setup: Vec<f64> = (0..n)
            .map(|k| {
                let outflow: f64 = w_bar[k * n..(k + 1) * n].iter().sum();
                15.0 * outflow.max(1.0).ln()
            })
            .collect();
        let gamma = (gamma_frac * (n * n) as f64).floor();
        SahlpInstance::new(n, d, w_bar, w_hat, setup, 3.0, 0.75, 2.0, gamma)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same instance under a different deviation budget.
    pub fn with_budget(mut self, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidInput("budget must be finite and nonnegative".into()));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn uncertainty_set(&self) -> UncertaintySet {
        UncertaintySet::budgeted(self.w_bar.clone(), self.w_hat.clone(), self.gamma)
            .expect("validated instance data always yields a set")
    }

    /// Hub of every node under `y`, verifying single allocation to open
    /// hubs only.
    fn allocation(&self, x: &[bool], y: &[bool]) -> Result<Vec<usize>> {
        let n = self.n;
        if x.len() != n || y.len() != n * n {
            return Err(Error::InvalidInput("assignment length mismatch".into()));
        }
        let mut hub = Vec::with_capacity(n);
        for i in 0..n {
            let mut chosen = None;
            for k in 0..n {
                if y[i * n + k] {
                    if chosen.is_some() {
                        return Err(Error::InvalidInput(format!("node {i} is allocated twice")));
                    }
                    if !x[k] {
                        return Err(Error::InvalidInput(format!("node {i} uses the closed hub {k}")));
                    }
                    chosen = Some(k);
                }
            }
            match chosen {
                Some(k) => hub.push(k),
                None => return Err(Error::InvalidInput(format!("node {i} is unallocated"))),
            }
        }
        Ok(hub)
    }

    /// Per-flow cost coefficients for an allocation, shared by the
    /// objective and the tests that check it against the quadratic form.
    fn flow_costs(&self, hub: &[usize]) -> Vec<f64> {
        let n = self.n;
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            let collect = self.chi * self.d[i * n + hub[i]];
            for j in 0..n {
                h[i * n + j] = collect
                    + self.delta_cost * self.d[j * n + hub[j]]
                    + self.alpha * self.d[hub[i] * n + hub[j]];
            }
        }
        h
    }

    fn setup_cost(&self, x: &[bool]) -> f64 {
        x.iter().zip(&self.setup).filter(|(open, _)| **open).map(|(_, f)| f).sum()
    }
}

/// Scenario flows with their row and column totals; negative dust from LP
/// arithmetic is clamped, genuinely negative flows are rejected.
struct Flows {
    w: Vec<f64>,
    origin: Vec<f64>,
    dest: Vec<f64>,
}

impl Flows {
    fn read(n: usize, c: &Scenario) -> Result<Flows> {
        if c.len() != n * n {
            return Err(Error::InvalidInput("scenario is not an n x n flow matrix".into()));
        }
        if c.values().iter().any(|&v| v < -1e-6) {
            return Err(Error::InvalidInput("flows must be nonnegative".into()));
        }
        let w: Vec<f64> = c.values().iter().map(|&v| v.max(0.0)).collect();
        let mut origin = vec![0.0; n];
        let mut dest = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                origin[i] += w[i * n + j];
                dest[j] += w[i * n + j];
            }
        }
        Ok(Flows { w, origin, dest })
    }

    /// Collection plus distribution cost of allocating node `i` to hub `k`.
    fn access_coef(&self, inst: &SahlpInstance, i: usize, k: usize) -> f64 {
        inst.d[i * inst.n + k] * (inst.chi * self.origin[i] + inst.delta_cost * self.dest[i])
    }
}

impl Problem for SahlpInstance {
    fn first_stage_len(&self) -> usize {
        self.n
    }

    fn second_stage_len(&self) -> usize {
        self.n * self.n
    }

    fn scenario_len(&self) -> usize {
        self.n * self.n
    }

    fn sense(&self) -> Sense {
        Sense::Minimize
    }

    fn objective(&self, x: &[bool], y: &[bool]) -> Result<(f64, Vec<f64>)> {
        let hub = self.allocation(x, y)?;
        Ok((self.setup_cost(x), self.flow_costs(&hub)))
    }

    fn first_stage_feasible(&self, x: &[bool]) -> bool {
        x.len() == self.n && x.iter().any(|&open| open)
    }

    fn full_feasible(&self, x: &[bool], y: &[bool]) -> bool {
        self.allocation(x, y).is_ok()
    }

    fn second_stage_candidates(&self, x: &[bool]) -> Option<Vec<Vec<bool>>> {
        let n = self.n;
        if x.len() != n {
            return Some(Vec::new());
        }
        let hubs: Vec<usize> = (0..n).filter(|&k| x[k]).collect();
        if hubs.is_empty() {
            return Some(Vec::new());
        }
        let mut count = 1usize;
        for _ in 0..n {
            count = count.saturating_mul(hubs.len());
            if count > CANDIDATE_CAP {
                return None;
            }
        }
        let mut out = Vec::with_capacity(count);
        let mut choice = vec![0usize; n];
        loop {
            let mut y = vec![false; n * n];
            for (i, &c) in choice.iter().enumerate() {
                y[i * n + hubs[c]] = true;
            }
            out.push(y);
            let mut i = 0;
            loop {
                if i == n {
                    return Some(out);
                }
                choice[i] += 1;
                if choice[i] < hubs.len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

/// Exact allocation oracle: a hub-location MIP whose inter-hub cost is
/// carried by per-origin transfer flows. Transfers may only leave a node's
/// own hub, so routes are single-leg and the linearization is exact for any
/// distance matrix.
pub struct SahlpFlowOracle<'a> {
    canon: &'a Canonical<SahlpInstance>,
}

impl<'a> SahlpFlowOracle<'a> {
    pub fn new(canon: &'a Canonical<SahlpInstance>) -> Self {
        SahlpFlowOracle { canon }
    }

    fn instance(&self) -> &SahlpInstance {
        self.canon.inner()
    }
}

impl Oracle for SahlpFlowOracle<'_> {
    fn solve(&self, c: &Scenario, fix: &FixationSet) -> Result<Option<Solution>> {
        let inst = self.instance();
        let n = inst.n;
        let f = Flows::read(n, c)?;
        let mut lp = LpProblem::new();
        let mut binaries = Vec::with_capacity(n + n * n);
        for k in 0..n {
            let id = lp.push_var(-inst.setup[k], 0.0, 1.0);
            binaries.push(id);
        }
        let y0 = n;
        for i in 0..n {
            for k in 0..n {
                let id = lp.push_var(-f.access_coef(inst, i, k), 0.0, 1.0);
                binaries.push(id);
            }
        }
        // Transfer variables exist only for origins that ship anything.
        let mut zid = vec![None; n * n * n];
        for i in 0..n {
            if f.origin[i] == 0.0 {
                continue;
            }
            for k in 0..n {
                for m in 0..n {
                    if k != m {
                        zid[(i * n + k) * n + m] =
                            Some(lp.push_var(-inst.alpha * inst.d[k * n + m], 0.0, INF));
                    }
                }
            }
        }
        for i in 0..n {
            lp.push_row((0..n).map(|k| (y0 + i * n + k, 1.0)).collect(), Relation::Eq, 1.0);
        }
        for i in 0..n {
            for k in 0..n {
                lp.push_row(vec![(y0 + i * n + k, 1.0), (k, -1.0)], Relation::Le, 0.0);
            }
        }
        for i in 0..n {
            if f.origin[i] == 0.0 {
                continue;
            }
            for k in 0..n {
                // Origin i's flow through hub k: shipped minus received
                // equals what enters at k minus what terminates at k.
                let mut balance = Vec::new();
                let mut capacity = Vec::new();
                for m in 0..n {
                    if m == k {
                        continue;
                    }
                    let out = zid[(i * n + k) * n + m].expect("created above");
                    let back = zid[(i * n + m) * n + k].expect("created above");
                    balance.push((out, 1.0));
                    balance.push((back, -1.0));
                    capacity.push((out, 1.0));
                }
                for j in 0..n {
                    let mut coef = f.w[i * n + j];
                    if j == i {
                        coef -= f.origin[i];
                    }
                    if coef != 0.0 {
                        balance.push((y0 + j * n + k, coef));
                    }
                }
                lp.push_row(balance, Relation::Eq, 0.0);
                capacity.push((y0 + i * n + k, -f.origin[i]));
                lp.push_row(capacity, Relation::Le, 0.0);
            }
        }
        for (index, value) in fix.iter() {
            if index >= n {
                return Err(Error::InvalidInput("fixation outside the hub variables".into()));
            }
            let v = if value { 1.0 } else { 0.0 };
            lp.lower[index] = v;
            lp.upper[index] = v;
        }
        let mip = MipProblem { lp, binaries };
        let r = solve_mip(&mip, &MipLimits::default())?;
        match r.status {
            MipStatus::Infeasible => Ok(None),
            MipStatus::LimitReached => Err(Error::LimitReached("allocation oracle hit a limit".into())),
            MipStatus::Optimal => {
                let x: Vec<bool> = (0..n).map(|k| r.assignment[k] > 0.5).collect();
                let y: Vec<bool> = (0..n * n).map(|j| r.assignment[y0 + j] > 0.5).collect();
                Ok(Some(Solution::new(self.canon, x, y)?))
            }
        }
    }
}

impl CcgEncode for SahlpInstance {
    fn first_stage_rows(&self, _b: &mut MasterBuilder, _x: &[usize]) -> Result<()> {
        // Any hub set is first-stage feasible; the allocation rows of each
        // block force at least one hub open.
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
        let f = Flows::read(n, c)?;
        let y: Vec<usize> = (0..n * n).map(|_| b.binary()).collect();
        let mut zid = vec![None; n * n * n];
        for i in 0..n {
            if f.origin[i] == 0.0 {
                continue;
            }
            for k in 0..n {
                for m in 0..n {
                    if k != m {
                        zid[(i * n + k) * n + m] = Some(b.continuous(0.0, INF));
                    }
                }
            }
        }
        for i in 0..n {
            b.row((0..n).map(|k| (y[i * n + k], 1.0)).collect(), Relation::Eq, 1.0);
        }
        for i in 0..n {
            for k in 0..n {
                b.row(vec![(y[i * n + k], 1.0), (x[k], -1.0)], Relation::Le, 0.0);
            }
        }
        for i in 0..n {
            if f.origin[i] == 0.0 {
                continue;
            }
            for k in 0..n {
                let mut balance = Vec::new();
                let mut capacity = Vec::new();
                for m in 0..n {
                    if m == k {
                        continue;
                    }
                    let out = zid[(i * n + k) * n + m].expect("created above");
                    let back = zid[(i * n + m) * n + k].expect("created above");
                    balance.push((out, 1.0));
                    balance.push((back, -1.0));
                    capacity.push((out, 1.0));
                }
                for j in 0..n {
                    let mut coef = f.w[i * n + j];
                    if j == i {
                        coef -= f.origin[i];
                    }
                    if coef != 0.0 {
                        balance.push((y[j * n + k], coef));
                    }
                }
                b.row(balance, Relation::Eq, 0.0);
                capacity.push((y[i * n + k], -f.origin[i]));
                b.row(capacity, Relation::Le, 0.0);
            }
        }
        let mut epigraph = vec![(mu, 1.0)];
        for k in 0..n {
            epigraph.push((x[k], -self.setup[k]));
        }
        for i in 0..n {
            for k in 0..n {
                let coef = f.access_coef(self, i, k);
                if coef != 0.0 {
                    epigraph.push((y[i * n + k], -coef));
                }
            }
        }
        for i in 0..n {
            for k in 0..n {
                for m in 0..n {
                    if let Some(z) = zid[(i * n + k) * n + m] {
                        let coef = self.alpha * self.d[k * n + m];
                        if coef != 0.0 {
                            epigraph.push((z, -coef));
                        }
                    }
                }
            }
        }
        b.row(epigraph, Relation::Ge, 0.0);
        Ok(y)
    }
}
