//! Dense-free bounded-variable linear programming.
//!
//! A two-phase revised simplex over sparse columns. Phase 1 minimizes the
//! total bound violation of the basic variables (artificials are ordinary
//! fixed-at-zero columns, so a nonzero artificial is just another violation),
//! walking a piecewise-linear ratio test that passes through bounds while the
//! infeasibility keeps decreasing. Phase 2 is the usual bounded simplex with
//! Bland's entering rule, so solves are deterministic and cannot cycle.
//!
//! The basis inverse is kept as a triangular crash factorization plus
//! product-form eta updates; a dense LU refactorization backstops long
//! pivot sequences and the final residual check.

use thiserror::Error;

/// Feasibility tolerance on scaled rows and on variable bounds.
pub const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost tolerance for entering-candidate selection.
const COST_TOL: f64 = 1e-9;
/// Minimum magnitude for a pivot element or a blocking ratio denominator.
const PIVOT_TOL: f64 = 1e-9;
/// Minimum magnitude for a crash pivot (scaled rows have max entry 1).
const CRASH_PIVOT_TOL: f64 = 1e-7;
/// Eta chain length that triggers a dense refactorization.
const ETA_LIMIT: usize = 400;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    BadProblem(String),
    #[error("numerical breakdown in simplex: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Sparse row: (variable index, coefficient). Duplicates accumulate.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program over bounded variables: minimize `objective . x` subject
/// to the constraint rows and `lower <= x <= upper` elementwise.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values; empty unless `status == Optimal`.
    pub values: Vec<f64>,
    /// Objective at the optimum; NaN unless `status == Optimal`.
    pub objective: f64,
}

impl LpSolution {
    fn non_optimal(status: LpStatus) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Triangular factorization produced by the crash: positions listed in
/// elimination order, with position `p` pivoting on row `p`.
struct TriFactor {
    order: Vec<usize>,
    pivot: Vec<f64>,
    base_vars: Vec<usize>,
}

enum BaseFactor {
    Tri(TriFactor),
    Dense(DenseLu),
}

struct Eta {
    pos: usize,
    w: Vec<f64>,
}

struct DenseLu {
    m: usize,
    lu: Vec<f64>,
    ipiv: Vec<usize>,
}

impl DenseLu {
    fn factor(m: usize, mut a: Vec<f64>) -> Result<Self, LpError> {
        let mut ipiv = vec![0usize; m];
        for k in 0..m {
            let mut p = k;
            let mut best = a[k * m + k].abs();
            for r in (k + 1)..m {
                let v = a[r * m + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-13 {
                return Err(LpError::Numerical("singular basis matrix".into()));
            }
            ipiv[k] = p;
            if p != k {
                for c in 0..m {
                    a.swap(k * m + c, p * m + c);
                }
            }
            let piv = a[k * m + k];
            for r in (k + 1)..m {
                let f = a[r * m + k] / piv;
                a[r * m + k] = f;
                if f != 0.0 {
                    for c in (k + 1)..m {
                        a[r * m + c] -= f * a[k * m + c];
                    }
                }
            }
        }
        Ok(Self { m, lu: a, ipiv })
    }

    /// Solve `B y = b` in place.
    fn solve(&self, b: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            b.swap(k, self.ipiv[k]);
        }
        for k in 0..m {
            let bk = b[k];
            if bk != 0.0 {
                for (r, br) in b.iter_mut().enumerate().take(m).skip(k + 1) {
                    *br -= self.lu[r * m + k] * bk;
                }
            }
        }
        for k in (0..m).rev() {
            let mut acc = b[k];
            for (c, bc) in b.iter().enumerate().take(m).skip(k + 1) {
                acc -= self.lu[k * m + c] * bc;
            }
            b[k] = acc / self.lu[k * m + k];
        }
    }

    /// Solve `B^T y = d` in place.
    fn solve_t(&self, d: &mut [f64]) {
        let m = self.m;
        // U^T v = d (forward)
        for k in 0..m {
            let mut acc = d[k];
            for (r, dr) in d.iter().enumerate().take(k) {
                acc -= self.lu[r * m + k] * dr;
            }
            d[k] = acc / self.lu[k * m + k];
        }
        // L^T w = v (backward, unit diagonal)
        for k in (0..m).rev() {
            let mut acc = d[k];
            for (r, dr) in d.iter().enumerate().take(m).skip(k + 1) {
                acc -= self.lu[r * m + k] * dr;
            }
            d[k] = acc;
        }
        for k in (0..m).rev() {
            d.swap(k, self.ipiv[k]);
        }
    }
}

struct Solver {
    m: usize,
    n_total: usize,
    n_structural: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    state: Vec<VarState>,
    x: Vec<f64>,
    basis: Vec<usize>,
    base: BaseFactor,
    etas: Vec<Eta>,
    iterations: usize,
    max_iterations: usize,
    /// Consecutive zero-length steps; a long stall flips pricing to Bland.
    stall: usize,
}

enum Phase {
    One,
    Two,
}

#[derive(Debug)]
enum StepOutcome {
    Moved,
    PhaseDone,
    Unbounded,
}

impl Solver {
    fn build(p: &LpProblem) -> Result<Option<Self>, LpError> {
        let n = p.num_vars;
        if p.objective.len() != n || p.lower.len() != n || p.upper.len() != n {
            return Err(LpError::BadProblem(format!(
                "inconsistent sizes: {} vars, {} costs, {} lower, {} upper",
                n,
                p.objective.len(),
                p.lower.len(),
                p.upper.len()
            )));
        }
        for j in 0..n {
            let (l, u) = (p.lower[j], p.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::BadProblem(format!(
                    "bad bounds on var {j}: [{l}, {u}]"
                )));
            }
            if l == f64::NEG_INFINITY && u == f64::INFINITY {
                return Err(LpError::BadProblem(format!(
                    "free variable {j} unsupported"
                )));
            }
            if !p.objective[j].is_finite() {
                return Err(LpError::BadProblem(format!("non-finite cost on var {j}")));
            }
        }
        // Crossed bounds make the box empty: a legitimate infeasibility.
        if (0..n).any(|j| p.lower[j] > p.upper[j]) {
            return Ok(None);
        }

        let m = p.constraints.len();
        // Accumulate rows, validate, and compute row scales.
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        for (r, c) in p.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::BadProblem(format!("non-finite rhs in row {r}")));
            }
            let mut acc: Vec<(usize, f64)> = Vec::with_capacity(c.coeffs.len());
            for &(j, v) in &c.coeffs {
                if j >= n {
                    return Err(LpError::BadProblem(format!(
                        "row {r} references variable {j} out of {n}"
                    )));
                }
                if !v.is_finite() {
                    return Err(LpError::BadProblem(format!(
                        "non-finite coefficient in row {r}"
                    )));
                }
                match acc.iter_mut().find(|(k, _)| *k == j) {
                    Some((_, sum)) => *sum += v,
                    None => acc.push((j, v)),
                }
            }
            acc.retain(|&(_, v)| v != 0.0);
            acc.sort_by_key(|&(j, _)| j);
            let max = acc.iter().map(|&(_, v)| v.abs()).fold(0.0f64, f64::max);
            let s = if max > 0.0 { 1.0 / max } else { 1.0 };
            rhs.push(c.rhs * s);
            scale.push(s);
            rows.push(acc);
        }

        // Columns: structural, then one slack per inequality row.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                cols[j].push((r, v * scale[r]));
            }
        }
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        let mut cost = p.objective.clone();
        for (r, c) in p.constraints.iter().enumerate() {
            let sign = match c.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            cols.push(vec![(r, sign)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            cost.push(0.0);
        }

        let mut solver = Solver {
            m,
            n_total: cols.len(),
            n_structural: n,
            cols,
            lower,
            upper,
            cost,
            rhs,
            state: Vec::new(),
            x: Vec::new(),
            basis: Vec::new(),
            base: BaseFactor::Tri(TriFactor {
                order: Vec::new(),
                pivot: Vec::new(),
                base_vars: Vec::new(),
            }),
            etas: Vec::new(),
            iterations: 0,
            max_iterations: 0,
            stall: 0,
        };
        solver.crash();
        solver.max_iterations = 1000 + 50 * (solver.m + solver.n_total);
        solver.recompute_basic_values();
        Ok(Some(solver))
    }

    /// Pick a triangular starting basis: sweep rows in order, assigning to
    /// each row the highest-index unused column whose support avoids every
    /// already-assigned row. Uncovered rows receive fixed-at-zero artificial
    /// columns, which phase 1 treats as plain bound violations.
    fn crash(&mut self) {
        let m = self.m;
        let mut assigned_col: Vec<Option<usize>> = vec![None; m];
        let mut covered = vec![false; m];
        let mut chosen = vec![false; self.n_total];
        let mut order = Vec::with_capacity(m);
        let mut pivot_of: Vec<f64> = vec![0.0; m];

        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, col) in self.cols.iter().enumerate() {
            for &(r, _) in col {
                row_cols[r].push(j);
            }
        }

        for r in 0..m {
            let mut pick: Option<(usize, f64)> = None;
            for &j in row_cols[r].iter().rev() {
                if chosen[j] {
                    continue;
                }
                let piv = self.cols[j]
                    .iter()
                    .find(|&&(rr, _)| rr == r)
                    .map(|&(_, v)| v);
                let piv = match piv {
                    Some(v) if v.abs() >= CRASH_PIVOT_TOL => v,
                    _ => continue,
                };
                if self.cols[j].iter().any(|&(rr, _)| rr != r && covered[rr]) {
                    continue;
                }
                match pick {
                    Some((best, _)) if best >= j => {}
                    _ => pick = Some((j, piv)),
                }
            }
            if let Some((j, piv)) = pick {
                assigned_col[r] = Some(j);
                covered[r] = true;
                chosen[j] = true;
                pivot_of[r] = piv;
                order.push(r);
            }
        }

        // Artificials for the rows the sweep could not cover.
        for r in 0..m {
            if assigned_col[r].is_none() {
                let j = self.n_total;
                self.cols.push(vec![(r, 1.0)]);
                self.lower.push(0.0);
                self.upper.push(0.0);
                self.cost.push(0.0);
                self.n_total += 1;
                assigned_col[r] = Some(j);
                pivot_of[r] = 1.0;
                order.push(r);
            }
        }

        self.basis = (0..m).map(|r| assigned_col[r].unwrap()).collect();
        self.state = vec![VarState::AtLower; self.n_total];
        self.x = vec![0.0; self.n_total];
        for j in 0..self.n_total {
            if self.lower[j].is_finite() {
                self.state[j] = VarState::AtLower;
                self.x[j] = self.lower[j];
            } else {
                self.state[j] = VarState::AtUpper;
                self.x[j] = self.upper[j];
            }
        }
        for (p, &j) in self.basis.iter().enumerate() {
            self.state[j] = VarState::Basic(p);
        }
        let pivot = order.iter().map(|&r| pivot_of[r]).collect();
        let base_vars = self.basis.clone();
        self.base = BaseFactor::Tri(TriFactor {
            order,
            pivot,
            base_vars,
        });
        self.etas.clear();
    }

    fn base_solve(&self, v: &mut [f64]) {
        match &self.base {
            BaseFactor::Tri(t) => {
                for (k, &p) in t.order.iter().enumerate() {
                    let val = v[p] / t.pivot[k];
                    for &(r, a) in &self.cols[t.base_vars[p]] {
                        v[r] -= a * val;
                    }
                    v[p] = val;
                }
            }
            BaseFactor::Dense(lu) => lu.solve(v),
        }
    }

    fn base_solve_t(&self, d: &mut [f64]) {
        match &self.base {
            BaseFactor::Tri(t) => {
                let mut z = vec![0.0; self.m];
                for (k, &p) in t.order.iter().enumerate().rev() {
                    let mut acc = d[p];
                    for &(r, a) in &self.cols[t.base_vars[p]] {
                        if r != p {
                            acc -= a * z[r];
                        }
                    }
                    z[p] = acc / t.pivot[k];
                }
                d.copy_from_slice(&z);
            }
            BaseFactor::Dense(lu) => lu.solve_t(d),
        }
    }

    fn apply_etas(&self, v: &mut [f64]) {
        for eta in &self.etas {
            let t = v[eta.pos] / eta.w[eta.pos];
            if t != 0.0 {
                for (vr, wr) in v.iter_mut().zip(&eta.w) {
                    *vr -= wr * t;
                }
            }
            v[eta.pos] = t;
        }
    }

    /// `w = B^-1 a_j` (indexed by basis position).
    fn ftran_col(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        for &(r, a) in &self.cols[j] {
            v[r] = a;
        }
        self.base_solve(&mut v);
        self.apply_etas(&mut v);
        v
    }

    /// `y = B^-T d` where `d` is indexed by basis position; result by row.
    fn btran(&self, d: &[f64]) -> Vec<f64> {
        let mut v = d.to_vec();
        for eta in self.etas.iter().rev() {
            let mut s = 0.0;
            for (r, (wr, vr)) in eta.w.iter().zip(v.iter()).enumerate() {
                if r != eta.pos {
                    s += wr * vr;
                }
            }
            v[eta.pos] = (v[eta.pos] - s) / eta.w[eta.pos];
        }
        self.base_solve_t(&mut v);
        v
    }

    fn recompute_basic_values(&mut self) {
        let mut b = self.rhs.clone();
        for j in 0..self.n_total {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, a) in &self.cols[j] {
                    b[r] -= a * xj;
                }
            }
        }
        self.base_solve(&mut b);
        self.apply_etas(&mut b);
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] = b[p];
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (p, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + p] = v;
            }
        }
        self.base = BaseFactor::Dense(DenseLu::factor(m, a)?);
        self.etas.clear();
        self.recompute_basic_values();
        Ok(())
    }

    fn violation(&self, j: usize) -> f64 {
        let x = self.x[j];
        if x < self.lower[j] {
            self.lower[j] - x
        } else if x > self.upper[j] {
            x - self.upper[j]
        } else {
            0.0
        }
    }

    fn max_infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .map(|&j| self.violation(j))
            .fold(0.0, f64::max)
    }

    /// Reduced costs against the phase's basic cost vector. The entering pick
    /// is the most improving column with lowest-index tie-break; under a
    /// degeneracy stall the caller flips to Bland's rule (first eligible
    /// index), which guarantees the walk cannot cycle.
    fn price(&self, phase: &Phase, bland: bool) -> Option<(usize, f64, f64)> {
        let mut cb = vec![0.0; self.m];
        match phase {
            Phase::One => {
                for (p, &j) in self.basis.iter().enumerate() {
                    let x = self.x[j];
                    if x < self.lower[j] - FEAS_TOL {
                        cb[p] = -1.0;
                    } else if x > self.upper[j] + FEAS_TOL {
                        cb[p] = 1.0;
                    }
                }
            }
            Phase::Two => {
                for (p, &j) in self.basis.iter().enumerate() {
                    cb[p] = self.cost[j];
                }
            }
        }
        let y = self.btran(&cb);
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n_total {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            if self.upper[j] - self.lower[j] <= 0.0 {
                continue; // fixed (includes artificials)
            }
            let cj = match phase {
                Phase::One => 0.0,
                Phase::Two => self.cost[j],
            };
            let mut dot = 0.0;
            for &(r, a) in &self.cols[j] {
                dot += y[r] * a;
            }
            let d = cj - dot;
            let candidate = match self.state[j] {
                VarState::AtLower if d < -COST_TOL => Some((j, d, 1.0)),
                VarState::AtUpper if d > COST_TOL => Some((j, d, -1.0)),
                _ => None,
            };
            let Some(c) = candidate else { continue };
            if bland {
                return Some(c);
            }
            match best {
                Some((_, bd, _)) if bd.abs() >= c.1.abs() => {}
                _ => best = Some(c),
            }
        }
        best
    }

    fn apply_pivot(
        &mut self,
        entering: usize,
        sigma: f64,
        theta: f64,
        w: Vec<f64>,
        leave: Option<(usize, f64)>,
    ) {
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] -= sigma * theta * w[p];
        }
        match leave {
            None => {
                // Bound flip.
                self.x[entering] += sigma * theta;
                self.state[entering] = match self.state[entering] {
                    VarState::AtLower => VarState::AtUpper,
                    VarState::AtUpper => VarState::AtLower,
                    b => b,
                };
                // Snap to the exact opposite bound.
                self.x[entering] = match self.state[entering] {
                    VarState::AtLower => self.lower[entering],
                    VarState::AtUpper => self.upper[entering],
                    _ => self.x[entering],
                };
            }
            Some((p, bound)) => {
                let leaving = self.basis[p];
                self.x[leaving] = bound;
                self.state[leaving] = if bound == self.lower[leaving] {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                };
                self.x[entering] += sigma * theta;
                self.basis[p] = entering;
                self.state[entering] = VarState::Basic(p);
                self.etas.push(Eta { pos: p, w });
            }
        }
    }

    fn maybe_refactor(&mut self) -> Result<(), LpError> {
        if self.etas.len() > ETA_LIMIT {
            self.refactor()?;
        }
        Ok(())
    }

    /// One phase-1 iteration with the pass-through ratio test: keep moving
    /// while the total infeasibility still decreases, so a single pivot can
    /// repair many violated rows.
    fn phase1_step(&mut self) -> Result<StepOutcome, LpError> {
        let (j, d, sigma) = match self.price(&Phase::One, self.stall > 64) {
            Some(t) => t,
            None => return Ok(StepOutcome::PhaseDone),
        };
        let w = self.ftran_col(j);
        let mut slope = sigma * d;

        // Breakpoints where a basic variable meets one of its bounds.
        let mut events: Vec<(f64, f64, usize, f64)> = Vec::new(); // (theta, gain, pos, bound)
        for (p, &bj) in self.basis.iter().enumerate() {
            let s = sigma * w[p];
            if s.abs() <= PIVOT_TOL {
                continue;
            }
            let v = self.x[bj];
            let (l, u) = (self.lower[bj], self.upper[bj]);
            if v < l - FEAS_TOL {
                if s < 0.0 {
                    events.push(((l - v) / (-s), -s, p, l));
                }
            } else if v > u + FEAS_TOL {
                if s > 0.0 {
                    events.push(((v - u) / s, s, p, u));
                }
            } else if s > 0.0 {
                if l.is_finite() {
                    events.push((((v - l) / s).max(0.0), s, p, l));
                }
            } else if u.is_finite() {
                events.push((((u - v) / (-s)).max(0.0), -s, p, u));
            }
        }
        events.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(self.basis[a.2].cmp(&self.basis[b.2]))
        });

        let theta_hard = self.upper[j] - self.lower[j];
        let mut stop: Option<(f64, usize, f64)> = None;
        for &(theta, gain, pos, bound) in &events {
            if theta > theta_hard {
                break;
            }
            slope += gain;
            if slope >= -COST_TOL {
                stop = Some((theta, pos, bound));
                break;
            }
        }
        match stop {
            Some((theta, pos, bound)) => {
                self.note_step(theta);
                self.apply_pivot(j, sigma, theta, w, Some((pos, bound)));
                self.maybe_refactor()?;
                Ok(StepOutcome::Moved)
            }
            None if theta_hard.is_finite() => {
                self.note_step(theta_hard);
                self.apply_pivot(j, sigma, theta_hard, w, None);
                Ok(StepOutcome::Moved)
            }
            None => Err(LpError::Numerical(
                "phase-1 direction without a blocking breakpoint".into(),
            )),
        }
    }

    fn phase2_step(&mut self) -> Result<StepOutcome, LpError> {
        let (j, _, sigma) = match self.price(&Phase::Two, self.stall > 64) {
            Some(t) => t,
            None => return Ok(StepOutcome::PhaseDone),
        };
        let w = self.ftran_col(j);

        let mut theta = self.upper[j] - self.lower[j];
        let mut leave: Option<(usize, f64)> = None;
        for (p, &bj) in self.basis.iter().enumerate() {
            let s = sigma * w[p];
            let v = self.x[bj];
            let (limit, bound) = if s > PIVOT_TOL {
                if self.lower[bj].is_finite() {
                    (((v - self.lower[bj]) / s).max(0.0), self.lower[bj])
                } else {
                    continue;
                }
            } else if s < -PIVOT_TOL {
                if self.upper[bj].is_finite() {
                    (((self.upper[bj] - v) / (-s)).max(0.0), self.upper[bj])
                } else {
                    continue;
                }
            } else {
                continue;
            };
            let better = match leave {
                None => limit < theta,
                Some((q, _)) => limit < theta || (limit == theta && bj < self.basis[q]),
            };
            if better {
                theta = limit;
                leave = Some((p, bound));
            }
        }

        if theta.is_infinite() {
            return Ok(StepOutcome::Unbounded);
        }
        self.note_step(theta);
        self.apply_pivot(j, sigma, theta, w, leave);
        self.maybe_refactor()?;
        Ok(StepOutcome::Moved)
    }

    fn note_step(&mut self, theta: f64) {
        if theta <= 1e-12 {
            self.stall += 1;
        } else {
            self.stall = 0;
        }
    }

    fn run_phase(&mut self, phase: Phase) -> Result<StepOutcome, LpError> {
        loop {
            if let Phase::One = phase {
                if self.max_infeasibility() <= FEAS_TOL {
                    return Ok(StepOutcome::PhaseDone);
                }
            }
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(LpError::Numerical(format!(
                    "iteration limit {} exceeded",
                    self.max_iterations
                )));
            }
            let out = match phase {
                Phase::One => self.phase1_step()?,
                Phase::Two => self.phase2_step()?,
            };
            match out {
                StepOutcome::Moved => continue,
                other => return Ok(other),
            }
        }
    }

    /// Residuals of the scaled rows at the current point.
    fn max_residual(&self) -> f64 {
        let mut acc = vec![0.0f64; self.m];
        for j in 0..self.n_total {
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, a) in &self.cols[j] {
                    acc[r] += a * xj;
                }
            }
        }
        acc.iter()
            .zip(&self.rhs)
            .map(|(lhs, rhs)| (lhs - rhs).abs())
            .fold(0.0, f64::max)
    }

    fn verify(&mut self) -> Result<(), LpError> {
        if self.max_residual() <= FEAS_TOL && self.max_infeasibility() <= FEAS_TOL {
            return Ok(());
        }
        // One repair attempt from a fresh factorization.
        self.refactor()?;
        if self.max_residual() <= FEAS_TOL && self.max_infeasibility() <= FEAS_TOL {
            return Ok(());
        }
        Err(LpError::Numerical(format!(
            "optimal basis fails the residual check: residual {:.3e}, bound violation {:.3e}",
            self.max_residual(),
            self.max_infeasibility()
        )))
    }
}

/// Solve a bounded-variable LP to proven optimality, or report that it is
/// infeasible or unbounded. Identical inputs take an identical pivot path.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    let mut s = match Solver::build(p)? {
        Some(s) => s,
        None => return Ok(LpSolution::non_optimal(LpStatus::Infeasible)),
    };

    if s.max_infeasibility() > FEAS_TOL {
        match s.run_phase(Phase::One)? {
            StepOutcome::PhaseDone => {
                if s.max_infeasibility() > FEAS_TOL {
                    return Ok(LpSolution::non_optimal(LpStatus::Infeasible));
                }
            }
            StepOutcome::Unbounded => {
                return Err(LpError::Numerical("phase 1 reported unbounded".into()))
            }
            StepOutcome::Moved => unreachable!(),
        }
    }

    match s.run_phase(Phase::Two)? {
        StepOutcome::PhaseDone => {}
        StepOutcome::Unbounded => return Ok(LpSolution::non_optimal(LpStatus::Unbounded)),
        StepOutcome::Moved => unreachable!(),
    }

    s.verify()?;
    let values: Vec<f64> = s.x[..s.n_structural].to_vec();
    let objective = values.iter().zip(&p.objective).map(|(x, c)| x * c).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(
        num_vars: usize,
        objective: Vec<f64>,
        constraints: Vec<Constraint>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> LpProblem {
        LpProblem {
            num_vars,
            objective,
            constraints,
            lower,
            upper,
        }
    }

    fn row(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Constraint {
        Constraint {
            coeffs,
            relation,
            rhs,
        }
    }

    #[test]
    fn one_variable_floor() {
        // min x s.t. x >= 3, 0 <= x <= 10
        let p = lp(
            1,
            vec![1.0],
            vec![row(vec![(0, 1.0)], Relation::Ge, 3.0)],
            vec![0.0],
            vec![10.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_interval_is_infeasible() {
        // x <= 1 and x >= 2
        let p = lp(
            1,
            vec![1.0],
            vec![
                row(vec![(0, 1.0)], Relation::Le, 1.0),
                row(vec![(0, 1.0)], Relation::Ge, 2.0),
            ],
            vec![0.0],
            vec![10.0],
        );
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_is_detected() {
        // min -x with x >= 0 unbounded above
        let p = lp(
            1,
            vec![-1.0],
            vec![row(vec![(0, 1.0)], Relation::Ge, 0.0)],
            vec![0.0],
            vec![f64::INFINITY],
        );
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn textbook_maximization() {
        // max 4x + 3y s.t. x - y <= 1, 2x - y <= 3, y <= 5 => (4, 5), obj 31.
        let p = lp(
            2,
            vec![-4.0, -3.0],
            vec![
                row(vec![(0, 1.0), (1, -1.0)], Relation::Le, 1.0),
                row(vec![(0, 2.0), (1, -1.0)], Relation::Le, 3.0),
                row(vec![(1, 1.0)], Relation::Le, 5.0),
            ],
            vec![0.0, 0.0],
            vec![f64::INFINITY, f64::INFINITY],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 31.0).abs() < 1e-8);
        assert!((s.values[0] - 4.0).abs() < 1e-8);
        assert!((s.values[1] - 5.0).abs() < 1e-8);
    }

    #[test]
    fn equality_chain_solves_by_substitution() {
        // x0 = 2; x1 - x0 = 1; x2 - x1 = 1 => (2, 3, 4)
        let p = lp(
            3,
            vec![1.0, 1.0, 1.0],
            vec![
                row(vec![(0, 1.0)], Relation::Eq, 2.0),
                row(vec![(0, -1.0), (1, 1.0)], Relation::Eq, 1.0),
                row(vec![(1, -1.0), (2, 1.0)], Relation::Eq, 1.0),
            ],
            vec![0.0; 3],
            vec![10.0; 3],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[2] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn upper_bounds_participate() {
        // min -x - y s.t. x + y <= 1.5, x,y in [0, 1]: optimum 1.5 on the face.
        let p = lp(
            2,
            vec![-1.0, -1.0],
            vec![row(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.5)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.5).abs() < 1e-9);
        assert!(s.values.iter().all(|&v| v <= 1.0 + 1e-9));
    }

    #[test]
    fn fixed_variables_stay_fixed() {
        // x0 fixed at 2 via bounds, x0 + x1 = 5.
        let p = lp(
            2,
            vec![0.0, 1.0],
            vec![row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 5.0)],
            vec![2.0, 0.0],
            vec![2.0, 10.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 2.0).abs() < 1e-9);
        assert!((s.values[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_coefficients_accumulate() {
        // (1 + 1) x = 4 -> x = 2
        let p = lp(
            1,
            vec![1.0],
            vec![row(vec![(0, 1.0), (0, 1.0)], Relation::Eq, 4.0)],
            vec![0.0],
            vec![10.0],
        );
        let s = solve_lp(&p).unwrap();
        assert!((s.values[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let p = lp(1, vec![1.0], vec![], vec![2.0], vec![1.0]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn free_variables_are_rejected() {
        let p = lp(
            1,
            vec![1.0],
            vec![],
            vec![f64::NEG_INFINITY],
            vec![f64::INFINITY],
        );
        assert!(matches!(solve_lp(&p), Err(LpError::BadProblem(_))));
    }

    #[test]
    fn redundant_rows_are_harmless() {
        let p = lp(
            2,
            vec![1.0, 1.0],
            vec![
                row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 2.0),
                row(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 4.0),
            ],
            vec![0.0, 0.0],
            vec![5.0, 5.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn dense_lu_solves_match_direct_substitution() {
        let m = 5;
        // A deterministic, well-conditioned matrix.
        let mut a = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                a[r * m + c] = ((r * 7 + c * 3) % 11) as f64 - 5.0;
            }
            a[r * m + r] += 12.0;
        }
        let lu = DenseLu::factor(m, a.clone()).unwrap();
        let xs: Vec<f64> = (0..m).map(|i| (i as f64) - 2.0).collect();
        let mut b = vec![0.0; m];
        for r in 0..m {
            for c in 0..m {
                b[r] += a[r * m + c] * xs[c];
            }
        }
        lu.solve(&mut b);
        for (got, want) in b.iter().zip(&xs) {
            assert!((got - want).abs() < 1e-10);
        }
        let mut d = vec![0.0; m];
        for c in 0..m {
            for r in 0..m {
                d[c] += a[r * m + c] * xs[r];
            }
        }
        lu.solve_t(&mut d);
        for (got, want) in d.iter().zip(&xs) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_refactorization_mid_solve_preserves_the_point() {
        // Drive a solver to its optimum, then force a dense refactorization
        // and confirm the factored basis reproduces the same basic values.
        let n = 14;
        let mut constraints = Vec::new();
        for r in 0..7 {
            constraints.push(row(
                vec![(r, 1.0), (r + 7, 1.0), ((r + 1) % 7, 0.5)],
                Relation::Eq,
                1.0 + 0.1 * r as f64,
            ));
        }
        let p = lp(
            n,
            (0..n).map(|j| ((j * 5) % 7) as f64 - 3.0).collect(),
            constraints,
            vec![0.0; n],
            vec![2.0; n],
        );
        let mut s = Solver::build(&p).unwrap().unwrap();
        if s.max_infeasibility() > FEAS_TOL {
            match s.run_phase(Phase::One).unwrap() {
                StepOutcome::PhaseDone => {}
                other => panic!("phase 1 ended {other:?}"),
            }
        }
        match s.run_phase(Phase::Two).unwrap() {
            StepOutcome::PhaseDone => {}
            other => panic!("phase 2 ended {other:?}"),
        }
        let before: Vec<f64> = s.x.clone();
        s.refactor().unwrap();
        assert!(matches!(s.base, BaseFactor::Dense(_)));
        assert!(s.max_residual() <= FEAS_TOL);
        for (a, b) in before.iter().zip(&s.x) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // The dense base also supports further pricing without drift.
        assert!(s.price(&Phase::Two, false).is_none());
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Many redundant constraints through the same vertex.
        let p = lp(
            2,
            vec![-1.0, -2.0],
            vec![
                row(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0),
                row(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0),
                row(vec![(0, 2.0), (1, 2.0)], Relation::Le, 2.0),
                row(vec![(0, 1.0)], Relation::Le, 1.0),
                row(vec![(1, 1.0)], Relation::Le, 1.0),
            ],
            vec![0.0, 0.0],
            vec![5.0, 5.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-8);
    }
}
