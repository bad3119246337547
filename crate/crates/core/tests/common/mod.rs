//! Shared helpers for the integration tests: random instances, fixtures and a
//! brute-force LP oracle.
#![allow(dead_code)]

use std::path::PathBuf;

use multifair::estimation::{EmpiricalModel, Matrix};
use multifair::lp_solver::LinearProgram;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("{name}.csv"))
}

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Strictly positive probability vector.
pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_column_stochastic<R: Rng>(rng: &mut R, c: usize) -> Matrix {
    let mut m = Matrix::zeros(c, c);
    for k in 0..c {
        for (i, p) in random_simplex(rng, c).into_iter().enumerate() {
            m[(i, k)] = p;
        }
    }
    m
}

pub fn random_model<R: Rng>(rng: &mut R, groups: usize, classes: usize) -> EmpiricalModel {
    let joint = random_simplex(rng, groups * classes);
    let p_ya = joint.chunks(classes).map(|c| c.to_vec()).collect();
    let z = (0..groups).map(|_| random_column_stochastic(rng, classes)).collect();
    EmpiricalModel::from_distributions(p_ya, z, &names("g", groups)).expect("valid random model")
}

pub fn random_policy<R: Rng>(rng: &mut R, groups: usize, classes: usize) -> Vec<Matrix> {
    (0..groups).map(|_| random_column_stochastic(rng, classes)).collect()
}

/// Inverse-CDF draw from a probability vector.
pub fn draw<R: Rng>(rng: &mut R, probs: impl IntoIterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.into_iter().enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// `|est - truth| <= 3 sigma` for a proportion estimated from `n` draws.
pub fn within_3_sigma(est: f64, truth: f64, n: usize) -> bool {
    let sigma = (truth * (1.0 - truth) / n as f64).sqrt();
    (est - truth).abs() <= 3.0 * sigma + 1e-12
}

/// Solves the square system `m x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..n {
                        m[r][c] -= f * m[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / m[i][i]).collect())
}

/// Linearly independent subset of the equality rows; `None` if inconsistent.
fn independent_rows(rows: &[Vec<f64>], rhs: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut kept = (Vec::new(), Vec::new());
    for (row, &b) in rows.iter().zip(rhs) {
        let (mut r, mut rb) = (row.clone(), b);
        for (v, vb) in &basis {
            let p = v.iter().position(|x| x.abs() > 1e-12).expect("nonzero basis row");
            let f = r[p] / v[p];
            if f != 0.0 {
                r.iter_mut().zip(v).for_each(|(x, y)| *x -= f * y);
                rb -= f * vb;
            }
        }
        if r.iter().all(|x| x.abs() < 1e-10) {
            if rb.abs() > 1e-9 {
                return None;
            }
            continue;
        }
        basis.push((r, rb));
        kept.0.push(row.clone());
        kept.1.push(b);
    }
    Some(kept)
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Minimum objective over all basic feasible points, found by trying every
/// choice of active inequality constraints. `None` when infeasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    let (eq_rows, eq_rhs) = independent_rows(&lp.eq.rows, &lp.eq.rhs)?;
    let mut le_rows = lp.ub.rows.clone();
    let mut le_rhs = lp.ub.rhs.clone();
    for j in 0..n {
        let mut e = vec![0.0; n];
        if lp.lower[j].is_finite() {
            e[j] = -1.0;
            le_rows.push(e.clone());
            le_rhs.push(-lp.lower[j]);
        }
        if lp.upper[j].is_finite() {
            e[j] = 1.0;
            le_rows.push(e);
            le_rhs.push(lp.upper[j]);
        }
    }
    let feasible = |x: &[f64]| {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        lp.eq
            .rows
            .iter()
            .zip(&lp.eq.rhs)
            .all(|(r, b)| (dot(r) - b).abs() <= 1e-9)
            && le_rows.iter().zip(&le_rhs).all(|(r, b)| dot(r) <= b + 1e-9)
    };
    let mut best: Option<f64> = None;
    let k = n.checked_sub(eq_rows.len())?;
    combinations(le_rows.len(), k, |pick| {
        let mut m = eq_rows.clone();
        let mut b = eq_rhs.clone();
        for &p in pick {
            m.push(le_rows[p].clone());
            b.push(le_rhs[p]);
        }
        if let Some(x) = solve_square(m, b) {
            if feasible(&x) {
                let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
    });
    best
}

/// Counts 3-sigma comparisons. With many comparisons a few exceedances are
/// expected (rate 0.27% under the normal approximation), so the tally passes
/// when the count stays below the 99.9% binomial quantile.
#[derive(Debug, Default, Clone, Copy)]
pub struct SigmaTally {
    pub checks: u64,
    pub exceed: u64,
}

impl SigmaTally {
    pub fn check(&mut self, est: f64, truth: f64, n: usize) {
        self.checks += 1;
        if !within_3_sigma(est, truth, n) {
            self.exceed += 1;
        }
    }

    pub fn allowed(&self) -> u64 {
        use statrs::distribution::{Binomial, DiscreteCDF};
        let b = Binomial::new(0.0027, self.checks).expect("valid binomial");
        b.inverse_cdf(0.999)
    }

    pub fn ok(&self) -> bool {
        self.exceed <= self.allowed()
    }
}

/// Draws `n` rows `(y, y_hat, a)` from a model: `(a, y)` from the joint,
/// `y_hat` from the blackbox confusion column.
pub fn sample_rows<R: Rng>(rng: &mut R, em: &EmpiricalModel, n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let c = em.n_classes();
    let joint: Vec<f64> = em.p_ya.iter().flatten().copied().collect();
    let (mut y, mut y_hat, mut a) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let cell = draw(rng, joint.iter().copied());
        let (g, j) = (cell / c, cell % c);
        let k = draw(rng, em.z[g].column(j).iter().copied());
        y.push(j);
        y_hat.push(k);
        a.push(g);
    }
    (y, y_hat, a)
}
