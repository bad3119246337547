//! Empirical distributions consumed by the linear program.
//!
//! Matrix orientation follows the conditional being stored: `z[a][(k, j)]` is
//! `Pr(Y_hat = k | Y = j, A = a)`, so every column of `z[a]` is a distribution.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::data_model::AdjustmentDataset;

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("empty (Y, A) cells with zero smoothing: {}", format_cells(.0))]
    EmptyCells(Vec<(String, String)>),
    #[error("group `{0}` has all its mass on a single class; false detection rates are undefined")]
    SingleClassGroup(String),
    #[error("negative or non-finite smoothing {0}")]
    InvalidSmoothing(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

fn format_cells(cells: &[(String, String)]) -> String {
    cells
        .iter()
        .map(|(g, c)| format!("(A={g}, Y={c})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// All estimated quantities for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalModel {
    /// `Pr(A = a)`.
    pub p_a: Vec<f64>,
    /// `p_ya[a][j] = Pr(Y = j, A = a)`.
    pub p_ya: Vec<Vec<f64>>,
    /// Blackbox confusion per group, `z[a][(k, j)] = Pr(Y_hat = k | Y = j, A = a)`.
    #[serde(serialize_with = "serialize_matrices")]
    pub z: Vec<Matrix>,
    /// False-detection mixture per group, see [`build_v`].
    #[serde(serialize_with = "serialize_matrices")]
    pub v: Vec<Matrix>,
    /// `p_yhat_given_a[a][k] = Pr(Y_hat = k | A = a)`.
    pub p_yhat_given_a: Vec<Vec<f64>>,
    /// Raw counts of `(Y = j, A = a)`.
    pub n_cells: Vec<Vec<u64>>,
}

pub(crate) fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn serialize_matrices<S: serde::Serializer>(ms: &[Matrix], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(ms.len()))?;
    for m in ms {
        seq.serialize_element(&matrix_rows(m))?;
    }
    seq.end()
}

impl EmpiricalModel {
    /// Builds a model from a joint `Pr(Y, A)` table and per-group confusions.
    ///
    /// `Pr(A)`, `Pr(Y_hat | A)` and `v` are derived. Counts are left at zero.
    pub fn from_distributions(
        p_ya: Vec<Vec<f64>>,
        z: Vec<Matrix>,
        group_names: &[String],
    ) -> Result<Self, EstimationError> {
        let g = p_ya.len();
        if g == 0 || z.len() != g || group_names.len() != g {
            return Err(EstimationError::InvalidDistribution(
                "group dimension mismatch".to_string(),
            ));
        }
        let c = p_ya[0].len();
        for (a, row) in p_ya.iter().enumerate() {
            if row.len() != c || z[a].nrows() != c || z[a].ncols() != c {
                return Err(EstimationError::InvalidDistribution(format!(
                    "class dimension mismatch in group {a}"
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(EstimationError::InvalidDistribution(format!(
                    "Pr(Y, A={a}) entries outside [0, 1]"
                )));
            }
        }
        let total: f64 = p_ya.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EstimationError::InvalidDistribution(format!(
                "Pr(Y, A) sums to {total}"
            )));
        }
        let p_a: Vec<f64> = p_ya.iter().map(|r| r.iter().sum()).collect();
        let p_yhat_given_a = derive_p_yhat_given_a(&z, &p_ya, &p_a);
        let v = build_v(&z, &p_ya, group_names)?;
        Ok(Self {
            p_a,
            p_ya,
            z,
            v,
            p_yhat_given_a,
            n_cells: vec![vec![0; c]; g],
        })
    }

    pub fn n_groups(&self) -> usize {
        self.p_a.len()
    }

    pub fn n_classes(&self) -> usize {
        self.z.first().map_or(0, |m| m.nrows())
    }

    /// `Pr(Y = j | A = a)`.
    pub fn p_y_given_a(&self, a: usize) -> DVector<f64> {
        DVector::from_iterator(self.n_classes(), self.p_ya[a].iter().map(|&p| p / self.p_a[a]))
    }

    /// Pretty JSON dump for debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

// Pr(Y_hat = k | A = a) = sum_j z[a][k][j] Pr(Y = j | A = a)
fn derive_p_yhat_given_a(z: &[Matrix], p_ya: &[Vec<f64>], p_a: &[f64]) -> Vec<Vec<f64>> {
    z.iter()
        .zip(p_ya)
        .zip(p_a)
        .map(|((za, row), &pa)| {
            let c = za.nrows();
            (0..c)
                .map(|k| {
                    if pa > 0.0 {
                        (0..c).map(|j| za[(k, j)] * row[j]).sum::<f64>() / pa
                    } else {
                        1.0 / c as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Estimates every distribution from counts.
///
/// With `smoothing = s > 0`, `s` is added to every count of each conditional
/// distribution (`Pr(Y_hat | Y, A)` and `Pr(Y | A)`) before normalizing.
/// `Pr(A)` is the raw group frequency and `Pr(Y_hat | A)` is derived from the
/// other two so that all quantities stay mutually consistent.
pub fn fit_empirical(ds: &AdjustmentDataset, smoothing: f64) -> Result<EmpiricalModel, EstimationError> {
    if !smoothing.is_finite() || smoothing < 0.0 {
        return Err(EstimationError::InvalidSmoothing(smoothing));
    }
    let (c, g) = (ds.n_classes(), ds.n_groups());
    let mut counts = vec![vec![vec![0u64; c]; c]; g]; // [a][k][j]
    let mut n_cells = vec![vec![0u64; c]; g];
    let mut n_groups = vec![0u64; g];
    for (y, k, a) in ds.rows() {
        counts[a][k][y] += 1;
        n_cells[a][y] += 1;
        n_groups[a] += 1;
    }
    if smoothing == 0.0 {
        let empty: Vec<(String, String)> = (0..g)
            .flat_map(|a| (0..c).map(move |j| (a, j)))
            .filter(|&(a, j)| n_cells[a][j] == 0)
            .map(|(a, j)| (ds.group_names()[a].clone(), ds.class_names()[j].clone()))
            .collect();
        if !empty.is_empty() {
            return Err(EstimationError::EmptyCells(empty));
        }
    }

    let n = ds.len() as f64;
    let p_a: Vec<f64> = n_groups.iter().map(|&m| m as f64 / n).collect();
    let p_ya: Vec<Vec<f64>> = (0..g)
        .map(|a| {
            let denom = n_groups[a] as f64 + smoothing * c as f64;
            (0..c)
                .map(|j| {
                    if denom > 0.0 {
                        p_a[a] * (n_cells[a][j] as f64 + smoothing) / denom
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let z: Vec<Matrix> = (0..g)
        .map(|a| {
            Matrix::from_fn(c, c, |k, j| {
                (counts[a][k][j] as f64 + smoothing) / (n_cells[a][j] as f64 + smoothing * c as f64)
            })
        })
        .collect();
    let p_yhat_given_a = derive_p_yhat_given_a(&z, &p_ya, &p_a);
    let v = build_v(&z, &p_ya, ds.group_names())?;
    Ok(EmpiricalModel {
        p_a,
        p_ya,
        z,
        v,
        p_yhat_given_a,
        n_cells,
    })
}

/// False-detection mixture matrices.
///
/// `v[a][(j, c)] = sum_{c' != c} z[a][(j, c')] Pr(Y = c', A = a) / Pr(Y != c, A = a)`,
/// so that `FDR^a = diag(P^a v[a])`. Each column `c` of `v[a]` is a mixture of
/// the columns `c' != c` of `z[a]`.
pub fn build_v(z: &[Matrix], p_ya: &[Vec<f64>], group_names: &[String]) -> Result<Vec<Matrix>, EstimationError> {
    z.iter()
        .zip(p_ya)
        .enumerate()
        .map(|(a, (za, row))| {
            let c = za.nrows();
            let total: f64 = row.iter().sum();
            let mut v = Matrix::zeros(c, c);
            for col in 0..c {
                let rest = total - row[col];
                if rest <= 0.0 {
                    let name = group_names.get(a).cloned().unwrap_or_else(|| a.to_string());
                    return Err(EstimationError::SingleClassGroup(name));
                }
                for j in 0..c {
                    let mass: f64 = (0..c).filter(|&cp| cp != col).map(|cp| za[(j, cp)] * row[cp]).sum();
                    v[(j, col)] = mass / rest;
                }
            }
            Ok(v)
        })
        .collect()
}
