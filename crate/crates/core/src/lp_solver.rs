//! Dense two-phase revised simplex for small linear programs.
//!
//! Solves `min c^T x` subject to `A_eq x = b_eq`, `A_ub x <= b_ub` and
//! `lower <= x <= upper` with a bounded-variable simplex: nonbasic variables
//! sit at one of their bounds, `<=` rows get a slack column, and phase one
//! drives an artificial column per infeasible row to zero. The basis inverse is
//! kept as an explicit dense matrix, updated by elementary row operations and
//! refactorized periodically.
//!
//! Pricing is Dantzig's rule with lowest-index tie-breaking. After a run of
//! degenerate pivots the solver switches to Bland's rule until the objective
//! strictly improves again, which rules out cycling. Nothing depends on
//! hashing or threads, so identical inputs give bit-identical outputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

/// Rows of a constraint block with their right-hand sides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintBlock {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl ConstraintBlock {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }
}

/// `min objective^T x` s.t. `eq`, `ub` and the box `lower <= x <= upper`.
///
/// Lower bounds must be finite; upper bounds may be `f64::INFINITY`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq: ConstraintBlock,
    pub ub: ConstraintBlock,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match objective length".into()));
        }
        for (name, block) in [("eq", &self.eq), ("ub", &self.ub)] {
            if block.rows.len() != block.rhs.len() {
                return Err(LpError::Malformed(format!("{name} rows and rhs differ in length")));
            }
            if let Some(i) = block.rows.iter().position(|r| r.len() != n) {
                return Err(LpError::Malformed(format!("{name} row {i} has wrong length")));
            }
            let finite = block.rows.iter().flatten().chain(&block.rhs).all(|v| v.is_finite());
            if !finite {
                return Err(LpError::Malformed(format!("{name} block has non-finite entries")));
            }
        }
        for j in 0..n {
            if !self.lower[j].is_finite() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(LpError::Malformed(format!("invalid bounds on variable {j}")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Max-norm equality residual, max `<=` violation and max bound violation at `x`.
    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let eq = self
            .eq
            .rows
            .iter()
            .zip(&self.eq.rhs)
            .map(|(r, b)| (dot(r, x) - b).abs())
            .fold(0.0, f64::max);
        let ub = self
            .ub
            .rows
            .iter()
            .zip(&self.ub.rhs)
            .map(|(r, b)| (dot(r, x) - b).max(0.0))
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        Residuals { eq, ub, bounds }
    }

    /// Lagrangian lower bound `min_{lower <= x <= upper} c^T x - y^T (A x - b)`
    /// for row multipliers `duals_eq`, `duals_ub`. Multipliers of `<=` rows are
    /// projected onto `y <= 0` so the bound is valid for any input.
    pub fn dual_bound(&self, duals_eq: &[f64], duals_ub: &[f64]) -> f64 {
        let y_ub: Vec<f64> = duals_ub.iter().map(|&y| y.min(0.0)).collect();
        let mut bound = dot(duals_eq, &self.eq.rhs) + dot(&y_ub, &self.ub.rhs);
        for j in 0..self.n_vars() {
            let mut d = self.objective[j];
            for (row, y) in self.eq.rows.iter().zip(duals_eq) {
                d -= y * row[j];
            }
            for (row, y) in self.ub.rows.iter().zip(&y_ub) {
                d -= y * row[j];
            }
            bound += if d >= 0.0 {
                d * self.lower[j]
            } else if self.upper[j].is_finite() {
                d * self.upper[j]
            } else {
                return f64::NEG_INFINITY;
            };
        }
        bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub eq: f64,
    pub ub: f64,
    pub bounds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Row multipliers of the equality rows at the final basis.
    pub duals_eq: Vec<f64>,
    /// Row multipliers of the `<=` rows at the final basis (non-positive at optimality).
    pub duals_ub: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Reduced-cost and primal feasibility tolerance.
    pub tol: f64,
    /// Pivot budget across both phases.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50_000,
        }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;
const STALL_LIMIT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

struct Simplex {
    m: usize,
    /// Column-major constraint matrix over structural, slack and artificial columns.
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Row-major dense basis inverse.
    binv: Vec<f64>,
    tol: f64,
    iterations: usize,
    since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
}

impl Simplex {
    fn new(lp: &LinearProgram, tol: f64) -> Self {
        let n = lp.n_vars();
        let (m_eq, m_ub) = (lp.eq.len(), lp.ub.len());
        let m = m_eq + m_ub;
        let total = n + m_ub + m;

        let row = |i: usize| -> &[f64] {
            if i < m_eq {
                &lp.eq.rows[i]
            } else {
                &lp.ub.rows[i - m_eq]
            }
        };
        let mut cols = vec![vec![0.0; m]; total];
        for (j, col) in cols.iter_mut().enumerate().take(n) {
            for (i, v) in col.iter_mut().enumerate() {
                *v = row(i)[j];
            }
        }
        for s in 0..m_ub {
            cols[n + s][m_eq + s] = 1.0;
        }
        let b: Vec<f64> = lp.eq.rhs.iter().chain(&lp.ub.rhs).copied().collect();

        let mut lo = vec![0.0; total];
        let mut up = vec![f64::INFINITY; total];
        lo[..n].copy_from_slice(&lp.lower);
        up[..n].copy_from_slice(&lp.upper);
        let mut x = vec![0.0; total];
        x[..n].copy_from_slice(&lp.lower);
        let mut state = vec![VarState::AtLower; total];

        let mut residual = b.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for (r, a) in residual.iter_mut().zip(&cols[j]) {
                    *r -= a * x[j];
                }
            }
        }

        let mut cost = vec![0.0; total];
        let mut basis = vec![0; m];
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            let art = n + m_ub + i;
            if i >= m_eq && residual[i] >= 0.0 {
                let slack = n + (i - m_eq);
                basis[i] = slack;
                x[slack] = residual[i];
                state[slack] = VarState::Basic;
                binv[i * m + i] = 1.0;
                up[art] = 0.0;
            } else {
                let sign = if residual[i] < 0.0 { -1.0 } else { 1.0 };
                cols[art][i] = sign;
                basis[i] = art;
                x[art] = residual[i].abs();
                state[art] = VarState::Basic;
                binv[i * m + i] = sign;
                cost[art] = 1.0;
            }
        }

        Self {
            m,
            cols,
            b,
            lo,
            up,
            cost,
            x,
            state,
            basis,
            binv,
            tol,
            iterations: 0,
            since_refactor: 0,
            degenerate_run: 0,
            bland: false,
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = self.cost[bv];
            if cb != 0.0 {
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr += cb * self.binv[i * m + r];
                }
            }
        }
        y
    }

    fn choose_entering(&self, y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols.len() {
            let state = self.state[j];
            if state == VarState::Basic || self.lo[j] == self.up[j] {
                continue;
            }
            let d = self.cost[j] - dot(y, &self.cols[j]);
            let eligible = match state {
                VarState::AtLower => d < -self.tol,
                VarState::AtUpper => d > self.tol,
                VarState::Basic => false,
            };
            if !eligible {
                continue;
            }
            if self.bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    fn column_in_basis(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let col = &self.cols[j];
        (0..m).map(|i| dot(&self.binv[i * m..(i + 1) * m], col)).collect()
    }

    fn step(&mut self) -> Step {
        let y = self.duals();
        let Some((j, _)) = self.choose_entering(&y) else {
            return Step::Optimal;
        };
        let alpha = self.column_in_basis(j);
        let sigma = if self.state[j] == VarState::AtLower { 1.0 } else { -1.0 };

        // Ratio test: basic i moves at rate -sigma * alpha_i per unit step.
        let mut leave: Option<(usize, f64, bool)> = None; // (row, theta, hits_upper)
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let bv = self.basis[i];
            let rate = -sigma * a;
            let (theta, hits_upper) = if rate < 0.0 {
                (((self.x[bv] - self.lo[bv]) / -rate).max(0.0), false)
            } else if self.up[bv].is_finite() {
                (((self.up[bv] - self.x[bv]) / rate).max(0.0), true)
            } else {
                continue;
            };
            let better = match leave {
                None => true,
                Some((p, best, _)) => {
                    if theta < best - RATIO_TIE {
                        true
                    } else if theta <= best + RATIO_TIE {
                        if self.bland {
                            bv < self.basis[p]
                        } else {
                            a.abs() > alpha[p].abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                leave = Some((i, theta, hits_upper));
            }
        }

        let flip = self.up[j] - self.lo[j];
        let theta = match leave {
            Some((_, t, _)) if t < flip => t,
            _ if flip.is_finite() => flip,
            _ => return Step::Unbounded,
        };

        for (i, &a) in alpha.iter().enumerate() {
            let bv = self.basis[i];
            self.x[bv] -= theta * sigma * a;
        }
        self.x[j] += sigma * theta;

        match leave {
            Some((p, t, hits_upper)) if t < flip => {
                let out = self.basis[p];
                if hits_upper {
                    self.x[out] = self.up[out];
                    self.state[out] = VarState::AtUpper;
                } else {
                    self.x[out] = self.lo[out];
                    self.state[out] = VarState::AtLower;
                }
                self.basis[p] = j;
                self.state[j] = VarState::Basic;
                self.pivot(p, &alpha);
            }
            _ => {
                if sigma > 0.0 {
                    self.x[j] = self.up[j];
                    self.state[j] = VarState::AtUpper;
                } else {
                    self.x[j] = self.lo[j];
                    self.state[j] = VarState::AtLower;
                }
            }
        }

        if theta <= RATIO_TIE {
            self.degenerate_run += 1;
            if self.degenerate_run >= STALL_LIMIT {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
        Step::Moved
    }

    fn pivot(&mut self, p: usize, alpha: &[f64]) {
        let m = self.m;
        let inv = 1.0 / alpha[p];
        for r in 0..m {
            self.binv[p * m + r] *= inv;
        }
        for i in 0..m {
            if i == p || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for r in 0..m {
                self.binv[i * m + r] -= f * self.binv[p * m + r];
            }
        }
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Recomputes the basis inverse from scratch and the basic values from the
    /// nonbasic ones. Returns false if the basis is numerically singular, in
    /// which case the incrementally updated inverse is kept.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return true;
        }
        let mut a = vec![0.0; m * m];
        for (c, &bv) in self.basis.iter().enumerate() {
            for r in 0..m {
                a[r * m + c] = self.cols[bv][r];
            }
        }
        let Some(inv) = invert(a, m) else {
            return false;
        };
        self.binv = inv;
        let mut rhs = self.b.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                for (r, v) in rhs.iter_mut().zip(col) {
                    *r -= v * self.x[j];
                }
            }
        }
        for i in 0..m {
            let bv = self.basis[i];
            self.x[bv] = dot(&self.binv[i * m..(i + 1) * m], &rhs);
        }
        true
    }

    fn run(&mut self, max_iter: usize) -> Option<SolveStatus> {
        loop {
            if self.iterations >= max_iter {
                return Some(SolveStatus::IterationLimit);
            }
            match self.step() {
                Step::Optimal => return None,
                Step::Unbounded => return Some(SolveStatus::Unbounded),
                Step::Moved => self.iterations += 1,
            }
        }
    }
}

/// Gauss-Jordan inversion with partial pivoting of a row-major `m x m` matrix.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col].abs() < 1e-13 {
            return None;
        }
        if piv != col {
            for c in 0..m {
                a.swap(piv * m + c, col * m + c);
                inv.swap(piv * m + c, col * m + c);
            }
        }
        let d = 1.0 / a[col * m + col];
        for c in 0..m {
            a[col * m + c] *= d;
            inv[col * m + c] *= d;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..m {
                a[r * m + c] -= f * a[col * m + c];
                inv[r * m + c] -= f * inv[col * m + c];
            }
        }
    }
    Some(inv)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `lp` to optimality with the two-phase simplex.
///
/// Malformed input is an error; infeasibility, unboundedness and exhausting the
/// pivot budget are reported through [`SolveStatus`].
pub fn solve(lp: &LinearProgram, opts: &SolverOptions) -> Result<LPSolution, LpError> {
    lp.validate()?;
    if !(opts.tol > 0.0) {
        return Err(LpError::Malformed(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let n = lp.n_vars();
    let (m_eq, m_ub) = (lp.eq.len(), lp.ub.len());
    let mut sx = Simplex::new(lp, opts.tol);

    let finish = |sx: &Simplex, status: SolveStatus| {
        let x = sx.x[..n].to_vec();
        let y = sx.duals();
        LPSolution {
            objective: lp.objective_value(&x),
            x,
            status,
            iterations: sx.iterations,
            duals_eq: y[..m_eq].to_vec(),
            duals_ub: y[m_eq..].to_vec(),
        }
    };

    // Phase one: minimize the sum of artificials.
    if let Some(status) = sx.run(opts.max_iter) {
        return Ok(finish(&sx, status));
    }
    sx.refactor();
    let art_start = n + m_ub;
    let infeasibility: f64 = (art_start..sx.cols.len()).map(|j| sx.x[j].abs()).sum();
    let scale = 1.0 + sx.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if infeasibility > opts.tol * scale * (sx.m.max(1) as f64) {
        return Ok(finish(&sx, SolveStatus::Infeasible));
    }

    // Phase two: artificials are pinned at zero, true costs restored.
    for j in art_start..sx.cols.len() {
        sx.up[j] = 0.0;
        sx.cost[j] = 0.0;
        if sx.state[j] != VarState::Basic {
            sx.x[j] = 0.0;
            sx.state[j] = VarState::AtLower;
        }
    }
    sx.cost[..n].copy_from_slice(&lp.objective);
    sx.degenerate_run = 0;
    sx.bland = false;
    if let Some(status) = sx.run(opts.max_iter) {
        return Ok(finish(&sx, status));
    }
    sx.refactor();
    for j in 0..n {
        let v = &mut sx.x[j];
        if *v < lp.lower[j] && *v > lp.lower[j] - 1e-9 {
            *v = lp.lower[j];
        } else if *v > lp.upper[j] && *v < lp.upper[j] + 1e-9 {
            *v = lp.upper[j];
        }
    }
    Ok(finish(&sx, SolveStatus::Optimal))
}
