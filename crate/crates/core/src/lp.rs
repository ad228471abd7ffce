//! Bounded-variable primal simplex.
//!
//! Small dense LP solver used by the master problems, the mixed-integer
//! search and the reference computations. Design constraints, in order:
//! correctness, determinism, simplicity. Two-phase (artificial variables,
//! no big-M), Dantzig pricing with a switch to Bland's rule after a run of
//! degenerate pivots, explicit dense basis inverse with periodic
//! refactorization.
//!
//! The solver maximizes. Callers that minimize negate their objective.

use crate::error::{Error, Result};

/// Absolute primal feasibility tolerance on row residuals and bounds.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Reduced-cost tolerance: smaller magnitudes count as zero in pricing.
pub const REDUCED_COST_TOL: f64 = 1e-9;
/// Number of degenerate pivots after which pricing falls back to Bland's
/// rule for the rest of the solve.
const DEGENERATE_PIVOT_LIMIT: usize = 500;
/// Pivot elements smaller than this are treated as structural zeros.
const PIVOT_TOL: f64 = 1e-9;
/// Steps shorter than this count as degenerate.
const DEGENERATE_STEP: f64 = 1e-11;
/// Basis inverse is rebuilt from scratch this often.
const REFACTOR_INTERVAL: usize = 128;

pub const INF: f64 = f64::INFINITY;
pub const NEG_INF: f64 = f64::NEG_INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// One linear constraint `sum coefs . vars  (<= | == | >=)  rhs`.
/// Coefficients are sparse `(var, value)` pairs.
#[derive(Clone, Debug)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// An LP in natural form: maximize `objective . x` subject to rows and
/// per-variable bounds. Bounds may be infinite on either side.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable, returning its index.
    pub fn push_var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn push_row(&mut self, coefs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(LpRow {
            coefs,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    fn validate(&self, lower: &[f64], upper: &[f64]) -> Result<()> {
        let n = self.num_vars();
        if lower.len() != n || upper.len() != n {
            return Err(Error::InvalidInput("bound vectors do not match variable count".into()));
        }
        for j in 0..n {
            if self.objective[j].is_nan() || lower[j].is_nan() || upper[j].is_nan() {
                return Err(Error::InvalidInput(format!("NaN in variable {j}")));
            }
            if lower[j] > upper[j] {
                return Err(Error::InvalidInput(format!(
                    "variable {j} has crossed bounds [{}, {}]",
                    lower[j], upper[j]
                )));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("row {r} has non-finite rhs")));
            }
            for &(j, v) in &row.coefs {
                if j >= n {
                    return Err(Error::InvalidInput(format!("row {r} references variable {j}")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("row {r} has non-finite coefficient")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit hit before convergence. Callers must treat this as a
    /// hard failure, never as an approximate answer.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    /// Structural variable values; empty unless `Optimal`.
    pub primal: Vec<f64>,
    pub objective: f64,
    /// One dual multiplier per row; empty unless `Optimal`.
    pub duals: Vec<f64>,
    /// Reduced cost per structural variable; empty unless `Optimal`.
    pub reduced_costs: Vec<f64>,
}

impl LpResult {
    fn non_optimal(status: LpStatus) -> Self {
        LpResult {
            status,
            primal: Vec::new(),
            objective: 0.0,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
        }
    }
}

/// Solves the LP with its stored bounds.
pub fn solve_lp(p: &LpProblem) -> Result<LpResult> {
    solve_lp_with_bounds(p, &p.lower, &p.upper)
}

/// Solves the LP with overridden variable bounds. The branch & bound search
/// uses this to fix binaries without cloning row data.
pub fn solve_lp_with_bounds(p: &LpProblem, lower: &[f64], upper: &[f64]) -> Result<LpResult> {
    p.validate(lower, upper)?;
    let mut s = Simplex::build(p, lower, upper);
    s.run()
}

/// Column of the working matrix, sparse by row.
#[derive(Clone, Debug)]
struct Column {
    entries: Vec<(usize, f64)>,
}

const NOT_BASIC: usize = usize::MAX;

struct Simplex {
    m: usize,
    n_struct: usize,
    n_slack: usize,
    cols: Vec<Column>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    obj: Vec<f64>,
    b: Vec<f64>,
    b_scale: f64,

    basis: Vec<usize>,
    basic_row: Vec<usize>,
    at_upper: Vec<bool>,
    /// Current value of every column; for basic columns mirrors `xb`.
    xval: Vec<f64>,
    binv: Vec<f64>,
    xb: Vec<f64>,

    degenerate_pivots: usize,
    pivots_since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Stalled,
}

impl Simplex {
    fn build(p: &LpProblem, lower: &[f64], upper: &[f64]) -> Simplex {
        let m = p.num_rows();
        let n = p.num_vars();
        let mut cols: Vec<Column> = (0..n).map(|_| Column { entries: Vec::new() }).collect();
        let mut b = Vec::with_capacity(m);
        for (i, row) in p.rows.iter().enumerate() {
            for &(j, v) in &row.coefs {
                if v != 0.0 {
                    cols[j].entries.push((i, v));
                }
            }
            b.push(row.rhs);
        }
        let mut lo = lower.to_vec();
        let mut up = upper.to_vec();
        let mut obj = p.objective.clone();
        // Slack per row turns every relation into an equality.
        for (i, row) in p.rows.iter().enumerate() {
            cols.push(Column { entries: vec![(i, 1.0)] });
            let (slo, shi) = match row.relation {
                Relation::Le => (0.0, INF),
                Relation::Ge => (NEG_INF, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo.push(slo);
            up.push(shi);
            obj.push(0.0);
        }
        let b_scale = 1.0 + b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let ncols = cols.len();
        let max_iterations = 20_000 + 60 * (m + ncols);
        Simplex {
            m,
            n_struct: n,
            n_slack: m,
            cols,
            lower: lo,
            upper: up,
            obj,
            b,
            b_scale,
            basis: Vec::new(),
            basic_row: vec![NOT_BASIC; ncols],
            at_upper: vec![false; ncols],
            xval: vec![0.0; ncols],
            binv: Vec::new(),
            xb: Vec::new(),
            degenerate_pivots: 0,
            pivots_since_refactor: 0,
            iterations: 0,
            max_iterations,
        }
    }

    /// Starting point: every variable at its bound nearest a finite value,
    /// slacks basic where the residual already fits their range, artificial
    /// columns covering the rest.
    fn install_start(&mut self) -> Vec<usize> {
        let n = self.n_struct + self.n_slack;
        for j in 0..n {
            let (lo, up) = (self.lower[j], self.upper[j]);
            let v = if lo.is_finite() {
                self.at_upper[j] = false;
                lo
            } else if up.is_finite() {
                self.at_upper[j] = true;
                up
            } else {
                0.0
            };
            self.xval[j] = v;
        }
        let mut residual = self.b.clone();
        for j in 0..self.n_struct {
            let v = self.xval[j];
            if v != 0.0 {
                for &(i, a) in &self.cols[j].entries {
                    residual[i] -= a * v;
                }
            }
        }
        self.basis = vec![NOT_BASIC; self.m];
        let mut artificials = Vec::new();
        let mut binv_sign = vec![1.0; self.m];
        for i in 0..self.m {
            let slack = self.n_struct + i;
            let (slo, shi) = (self.lower[slack], self.upper[slack]);
            let r = residual[i];
            if r >= slo - FEASIBILITY_TOL && r <= shi + FEASIBILITY_TOL {
                self.basis[i] = slack;
                self.xval[slack] = r.clamp(slo.max(NEG_INF), shi.min(INF));
            } else {
                // Slack parks at the bound nearest the residual; an
                // artificial column absorbs the remaining gap.
                let sb = if r < slo { slo } else { shi };
                self.xval[slack] = sb;
                self.at_upper[slack] = sb == shi && shi != slo;
                let gap = r - sb;
                let sign = if gap >= 0.0 { 1.0 } else { -1.0 };
                let aj = self.cols.len();
                self.cols.push(Column { entries: vec![(i, sign)] });
                self.lower.push(0.0);
                self.upper.push(INF);
                self.obj.push(0.0);
                self.at_upper.push(false);
                self.xval.push(gap.abs());
                self.basic_row.push(NOT_BASIC);
                self.basis[i] = aj;
                binv_sign[i] = sign;
                artificials.push(aj);
            }
        }
        self.binv = vec![0.0; self.m * self.m];
        for i in 0..self.m {
            self.binv[i * self.m + i] = binv_sign[i];
        }
        self.xb = (0..self.m).map(|i| self.xval[self.basis[i]]).collect();
        for (i, &bj) in self.basis.iter().enumerate() {
            self.basic_row[bj] = i;
        }
        artificials
    }

    fn run(&mut self) -> Result<LpResult> {
        let artificials = self.install_start();
        if !artificials.is_empty() {
            let mut phase1 = vec![0.0; self.cols.len()];
            for &a in &artificials {
                phase1[a] = -1.0;
            }
            match self.iterate(&phase1)? {
                Step::Stalled => return Ok(LpResult::non_optimal(LpStatus::Stalled)),
                Step::Unbounded => {
                    return Err(Error::Numerical("phase 1 reported an unbounded ray".into()))
                }
                _ => {}
            }
            let infeasibility: f64 = artificials.iter().map(|&a| self.xval[a]).sum();
            if infeasibility > FEASIBILITY_TOL * self.b_scale {
                return Ok(LpResult::non_optimal(LpStatus::Infeasible));
            }
            for &a in &artificials {
                self.lower[a] = 0.0;
                self.upper[a] = 0.0;
                self.xval[a] = 0.0;
            }
            self.evict_artificials(&artificials);
        }
        let obj = self.obj.clone();
        let step = self.iterate(&obj)?;
        match step {
            Step::Stalled => Ok(LpResult::non_optimal(LpStatus::Stalled)),
            Step::Unbounded => Ok(LpResult::non_optimal(LpStatus::Unbounded)),
            Step::Optimal => self.extract(),
        }
    }

    /// Runs pivots for one phase until no entering column improves the
    /// given objective.
    fn iterate(&mut self, obj: &[f64]) -> Result<Step> {
        loop {
            if self.iterations >= self.max_iterations {
                return Ok(Step::Stalled);
            }
            self.iterations += 1;
            if self.pivots_since_refactor >= REFACTOR_INTERVAL {
                self.refactor()?;
            }
            let y = self.basic_duals(obj);
            let bland = self.degenerate_pivots > DEGENERATE_PIVOT_LIMIT;
            let entering = self.price(obj, &y, bland);
            let Some((e, dir)) = entering else {
                return Ok(Step::Optimal);
            };
            let t = self.ftran(e);
            match self.ratio_and_pivot(e, dir, &t) {
                RatioOutcome::Unbounded => return Ok(Step::Unbounded),
                RatioOutcome::Done => {}
            }
        }
    }

    /// y = c_B * Binv.
    fn basic_duals(&self, obj: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &bj) in self.basis.iter().enumerate() {
            let c = obj[bj];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for i in 0..m {
                    y[i] += c * row[i];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, obj: &[f64], y: &[f64], j: usize) -> f64 {
        let mut d = obj[j];
        for &(i, v) in &self.cols[j].entries {
            d -= y[i] * v;
        }
        d
    }

    /// Entering choice. Dantzig: largest reduced-cost magnitude among
    /// eligible columns, ties to the lowest index. Bland: lowest eligible
    /// index. Returns the column and its movement direction.
    fn price(&self, obj: &[f64], y: &[f64], bland: bool) -> Option<(usize, i8)> {
        let mut best: Option<(usize, i8, f64)> = None;
        for j in 0..self.cols.len() {
            if self.basic_row[j] != NOT_BASIC || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(obj, y, j);
            let dir = if self.at_upper[j] {
                if d < -REDUCED_COST_TOL {
                    -1i8
                } else {
                    continue;
                }
            } else if self.lower[j].is_finite() || self.upper[j].is_finite() {
                if d > REDUCED_COST_TOL {
                    1i8
                } else {
                    continue;
                }
            } else {
                // Free column resting at zero: move along the profitable sign.
                if d > REDUCED_COST_TOL {
                    1i8
                } else if d < -REDUCED_COST_TOL {
                    -1i8
                } else {
                    continue;
                }
            };
            if bland {
                return Some((j, dir));
            }
            let score = d.abs();
            match best {
                Some((_, _, s)) if s >= score => {}
                _ => best = Some((j, dir, score)),
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// t = Binv * A_e.
    fn ftran(&self, e: usize) -> Vec<f64> {
        let m = self.m;
        let mut t = vec![0.0; m];
        for &(i, v) in &self.cols[e].entries {
            for r in 0..m {
                t[r] += self.binv[r * m + i] * v;
            }
        }
        t
    }

    fn ratio_and_pivot(&mut self, e: usize, dir: i8, t: &[f64]) -> RatioOutcome {
        let s = dir as f64;
        // Distance the entering column may move inside its own range.
        let own_limit = match (self.lower[e].is_finite(), self.upper[e].is_finite()) {
            (true, true) => self.upper[e] - self.lower[e],
            _ => INF,
        };
        let mut step = own_limit;
        let mut leave: Option<(usize, bool)> = None; // (row, hits_upper)
        for r in 0..self.m {
            let coef = s * t[r];
            if coef.abs() <= PIVOT_TOL {
                continue;
            }
            let bj = self.basis[r];
            let (ratio, hits_upper) = if coef > 0.0 {
                let lo = self.lower[bj];
                if !lo.is_finite() {
                    continue;
                }
                (((self.xb[r] - lo).max(0.0)) / coef, false)
            } else {
                let up = self.upper[bj];
                if !up.is_finite() {
                    continue;
                }
                (((up - self.xb[r]).max(0.0)) / (-coef), true)
            };
            if ratio < step - 1e-12 {
                step = ratio;
                leave = Some((r, hits_upper));
            }
        }
        if step.is_infinite() {
            return RatioOutcome::Unbounded;
        }
        if step <= DEGENERATE_STEP {
            self.degenerate_pivots += 1;
        }
        // Move the entering variable and shift all basic values.
        let delta = s * step;
        for r in 0..self.m {
            if t[r] != 0.0 {
                self.xb[r] -= delta * t[r];
                let bj = self.basis[r];
                self.xval[bj] = self.xb[r];
            }
        }
        let new_val = self.xval[e] + delta;
        match leave {
            None => {
                // Bound flip: entering stays nonbasic at its other bound.
                self.xval[e] = if dir > 0 { self.upper[e] } else { self.lower[e] };
                self.at_upper[e] = dir > 0;
            }
            Some((r, hits_upper)) => {
                let lv = self.basis[r];
                let bound = if hits_upper { self.upper[lv] } else { self.lower[lv] };
                self.xval[lv] = bound;
                self.at_upper[lv] = hits_upper;
                self.basic_row[lv] = NOT_BASIC;
                self.basis[r] = e;
                self.basic_row[e] = r;
                self.xval[e] = new_val;
                self.xb[r] = new_val;
                self.update_binv(r, t);
                self.pivots_since_refactor += 1;
            }
        }
        RatioOutcome::Done
    }

    /// Elementary transformation that maps column direction `t` to the unit
    /// vector of the pivot row.
    fn update_binv(&mut self, r: usize, t: &[f64]) {
        let m = self.m;
        let piv = t[r];
        let row_start = r * m;
        for c in 0..m {
            self.binv[row_start + c] /= piv;
        }
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = t[i];
            if f != 0.0 {
                for c in 0..m {
                    let v = self.binv[row_start + c] * f;
                    self.binv[i * m + c] -= v;
                }
            }
        }
    }

    /// Forces remaining basic artificial columns (all at value zero) out of
    /// the basis where a replacement column exists. Rows with no replacement
    /// are redundant and keep their artificial pinned at zero.
    fn evict_artificials(&mut self, artificials: &[usize]) {
        for &a in artificials {
            let r = self.basic_row[a];
            if r == NOT_BASIC {
                continue;
            }
            let n = self.n_struct + self.n_slack;
            let mut replacement: Option<(usize, Vec<f64>)> = None;
            for j in 0..n {
                if self.basic_row[j] != NOT_BASIC || self.lower[j] == self.upper[j] {
                    continue;
                }
                let t = self.ftran(j);
                if t[r].abs() > 1e-7 {
                    replacement = Some((j, t));
                    break;
                }
            }
            if let Some((j, t)) = replacement {
                // Zero-length pivot: the entering column keeps its value.
                self.basic_row[a] = NOT_BASIC;
                self.basis[r] = j;
                self.basic_row[j] = r;
                self.xb[r] = self.xval[j];
                self.update_binv(r, &t);
                self.pivots_since_refactor += 1;
            }
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination with partial
    /// pivoting and recomputes basic values from the nonbasic point.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (r, &bj) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[bj].entries {
                a[i * m + r] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = a[col * m + col].abs();
            for r in col + 1..m {
                let v = a[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val <= 1e-12 {
                return Err(Error::Numerical("singular basis during refactorization".into()));
            }
            if piv_row != col {
                for c in 0..m {
                    a.swap(col * m + c, piv_row * m + c);
                    inv.swap(col * m + c, piv_row * m + c);
                }
            }
            let p = a[col * m + col];
            for c in 0..m {
                a[col * m + c] /= p;
                inv[col * m + c] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f != 0.0 {
                    for c in 0..m {
                        let av = a[col * m + c] * f;
                        let iv = inv[col * m + c] * f;
                        a[r * m + c] -= av;
                        inv[r * m + c] -= iv;
                    }
                }
            }
        }
        self.binv = inv;
        let mut rhs = self.b.clone();
        for j in 0..self.cols.len() {
            if self.basic_row[j] != NOT_BASIC {
                continue;
            }
            let v = self.xval[j];
            if v != 0.0 {
                for &(i, av) in &self.cols[j].entries {
                    rhs[i] -= av * v;
                }
            }
        }
        for r in 0..m {
            let mut v = 0.0;
            for i in 0..m {
                v += self.binv[r * m + i] * rhs[i];
            }
            self.xb[r] = v;
            self.xval[self.basis[r]] = v;
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn extract(&mut self) -> Result<LpResult> {
        for (r, &bj) in self.basis.iter().enumerate() {
            self.xval[bj] = self.xb[r];
        }
        let primal: Vec<f64> = self.xval[..self.n_struct].to_vec();
        let mut objective = 0.0;
        for j in 0..self.n_struct {
            objective += self.obj[j] * primal[j];
        }
        // Residual check: an Optimal claim must be primal feasible.
        let mut lhs = vec![0.0; self.m];
        let mut scale = vec![1.0; self.m];
        for (j, col) in self.cols.iter().enumerate() {
            let v = self.xval[j];
            if v != 0.0 {
                for &(i, a) in &col.entries {
                    lhs[i] += a * v;
                    scale[i] += (a * v).abs();
                }
            }
        }
        for i in 0..self.m {
            let err = (lhs[i] - self.b[i]).abs();
            if err > FEASIBILITY_TOL * (scale[i] + self.b[i].abs()) {
                return Err(Error::Numerical(format!("row {i} residual {err} exceeds tolerance")));
            }
        }
        let obj = self.obj.clone();
        let y = self.basic_duals(&obj);
        let mut reduced = Vec::with_capacity(self.n_struct);
        for j in 0..self.n_struct {
            reduced.push(self.reduced_cost(&obj, &y, j));
        }
        debug_assert!(self.weak_duality_holds(&y, objective));
        Ok(LpResult {
            status: LpStatus::Optimal,
            primal,
            objective,
            duals: y,
            reduced_costs: reduced,
        })
    }

    /// Weak duality spot check: the bound implied by the final multipliers
    /// must dominate the primal objective.
    fn weak_duality_holds(&self, y: &[f64], objective: f64) -> bool {
        let mut bound = 0.0;
        for i in 0..self.m {
            bound += y[i] * self.b[i];
        }
        for j in 0..self.cols.len() {
            if self.basic_row[j] != NOT_BASIC {
                continue;
            }
            let d = self.reduced_cost(&self.obj, y, j);
            if d > REDUCED_COST_TOL {
                if !self.upper[j].is_finite() {
                    return false;
                }
                bound += d * self.upper[j];
            } else if d < -REDUCED_COST_TOL {
                if !self.lower[j].is_finite() {
                    return false;
                }
                bound += d * self.lower[j];
            }
        }
        objective <= bound + 1e-6 * (1.0 + objective.abs())
    }
}

enum RatioOutcome {
    Unbounded,
    Done,
}
