//! The learned adjustment `P^a` and randomized prediction from it.
//!
//! Adjusted labels must be *sampled* from `P^a[., y_hat]`. Taking the most
//! likely class per column does not preserve the fairness constraints and can
//! collapse back onto the blackbox predictions.
//!
//! Randomness uses ChaCha8 streams. Row `r` of a batch draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `r`, so predictions do
//! not depend on evaluation order or thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::AdjustmentDataset;
use crate::estimation::{matrix_rows, EmpiricalModel, Matrix};
use crate::fairness_lp::{AssembledLP, Criterion, ObjectiveKind, Pairing};
use crate::lp_solver::{LPSolution, SolveStatus};

pub const POLICY_FORMAT_VERSION: u32 = 1;
const COLUMN_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("solver did not reach optimality: {0:?}")]
    NotOptimal(SolveStatus),
    #[error("solution violates its bounds by {0:e}")]
    BoundViolation(f64),
    #[error("column {column} of group {group} sums to {sum}")]
    NotStochastic { group: usize, column: usize, sum: f64 },
    #[error("{kind} index {index} out of range ({size})")]
    OutOfRange {
        kind: &'static str,
        index: usize,
        size: usize,
    },
    #[error("{kind} `{name}` is not known to the policy")]
    SpaceMismatch { kind: &'static str, name: String },
    #[error("group `{0}` was not observed when the policy was fitted")]
    UnseenGroup(String),
    #[error("unsupported policy format version {0}")]
    Version(u32),
    #[error("malformed policy: {0}")]
    Malformed(String),
    #[error("json: {0}")]
    Json(String),
}

/// How the policy was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub criterion: Option<Criterion>,
    pub epsilon: f64,
    pub pairing: Option<Pairing>,
    pub objective: Option<ObjectiveKind>,
    pub status: SolveStatus,
    pub objective_value: Option<f64>,
    pub training_n: usize,
    /// Rows per group in the training data.
    pub training_group_counts: Vec<u64>,
    pub seed: Option<u64>,
}

impl PolicyMeta {
    fn handmade(groups: usize) -> Self {
        Self {
            criterion: None,
            epsilon: 0.0,
            pairing: None,
            objective: None,
            status: SolveStatus::Optimal,
            objective_value: None,
            training_n: 0,
            training_group_counts: vec![1; groups],
            seed: None,
        }
    }
}

/// Training-side facts recorded in [`PolicyMeta`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub training_n: usize,
    pub training_group_counts: Vec<u64>,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn of(ds: &AdjustmentDataset, seed: Option<u64>) -> Self {
        let mut counts = vec![0; ds.n_groups()];
        for &a in ds.a() {
            counts[a] += 1;
        }
        Self {
            training_n: ds.len(),
            training_group_counts: counts,
            seed,
        }
    }
}

/// `p[a][(i, k)] = Pr(Y_adj = i | Y_hat = k, A = a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentPolicy {
    pub class_names: Vec<String>,
    pub group_names: Vec<String>,
    pub p: Vec<Matrix>,
    pub meta: PolicyMeta,
}

/// Row indices remapped into a policy's class and group spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRows {
    pub y: Vec<usize>,
    pub y_hat: Vec<usize>,
    pub a: Vec<usize>,
}

impl AdjustmentPolicy {
    /// Validates shapes and column sums.
    pub fn from_matrices(
        class_names: Vec<String>,
        group_names: Vec<String>,
        p: Vec<Matrix>,
        meta: PolicyMeta,
    ) -> Result<Self, PolicyError> {
        let (c, g) = (class_names.len(), group_names.len());
        if p.len() != g {
            return Err(PolicyError::Malformed(format!("{} matrices for {g} groups", p.len())));
        }
        if meta.training_group_counts.len() != g {
            return Err(PolicyError::Malformed(
                "training group counts do not match groups".into(),
            ));
        }
        for (a, m) in p.iter().enumerate() {
            if m.nrows() != c || m.ncols() != c {
                return Err(PolicyError::Malformed(format!("group {a} matrix is not {c}x{c}")));
            }
            if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(PolicyError::Malformed(format!("group {a} has entries outside [0, 1]")));
            }
            for k in 0..c {
                let sum = m.column(k).sum();
                if (sum - 1.0).abs() > COLUMN_TOL {
                    return Err(PolicyError::NotStochastic {
                        group: a,
                        column: k,
                        sum,
                    });
                }
            }
        }
        Ok(Self {
            class_names,
            group_names,
            p,
            meta,
        })
    }

    /// Pass-through policy: always returns the blackbox prediction.
    pub fn identity(class_names: Vec<String>, group_names: Vec<String>) -> Self {
        let c = class_names.len();
        let g = group_names.len();
        Self {
            p: vec![Matrix::identity(c, c); g],
            meta: PolicyMeta::handmade(g),
            class_names,
            group_names,
        }
    }

    /// Ignores the blackbox and predicts uniformly at random.
    pub fn uniform(class_names: Vec<String>, group_names: Vec<String>) -> Self {
        let c = class_names.len();
        let g = group_names.len();
        Self {
            p: vec![Matrix::from_element(c, c, 1.0 / c as f64); g],
            meta: PolicyMeta::handmade(g),
            class_names,
            group_names,
        }
    }

    /// Un-flattens an optimal solution and renormalizes each column.
    pub fn from_solution(
        lp: &AssembledLP,
        sol: &LPSolution,
        class_names: &[String],
        group_names: &[String],
        provenance: Provenance,
    ) -> Result<Self, PolicyError> {
        if sol.status != SolveStatus::Optimal {
            return Err(PolicyError::NotOptimal(sol.status));
        }
        let vi = lp.var_index;
        if sol.x.len() != vi.len() || class_names.len() != vi.classes || group_names.len() != vi.groups {
            return Err(PolicyError::Malformed("solution does not match the program".into()));
        }
        let clip = sol.x.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
        if clip > COLUMN_TOL {
            return Err(PolicyError::BoundViolation(clip));
        }
        let c = vi.classes;
        let p: Vec<Matrix> = (0..vi.groups)
            .map(|a| {
                let mut m = Matrix::from_fn(c, c, |i, k| sol.x[vi.index(a, i, k)].clamp(0.0, 1.0));
                for k in 0..c {
                    let sum = m.column(k).sum();
                    m.column_mut(k).scale_mut(1.0 / sum);
                }
                m
            })
            .collect();
        let meta = PolicyMeta {
            criterion: Some(lp.spec.criterion),
            epsilon: lp.spec.epsilon,
            pairing: Some(lp.spec.pairing),
            objective: Some(lp.objective_kind),
            status: sol.status,
            objective_value: Some(sol.objective),
            training_n: provenance.training_n,
            training_group_counts: if provenance.training_group_counts.is_empty() {
                vec![1; vi.groups]
            } else {
                provenance.training_group_counts
            },
            seed: provenance.seed,
        };
        Self::from_matrices(class_names.to_vec(), group_names.to_vec(), p, meta)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    /// Number of stored probabilities, `G * C * C`.
    pub fn n_terms(&self) -> usize {
        self.n_groups() * self.n_classes() * self.n_classes()
    }

    /// Draws an adjusted class for one individual by inverse CDF over the
    /// column `p[a][., y_hat]` in class order.
    pub fn predict<R: RngCore>(&self, y_hat: usize, a: usize, rng: &mut R) -> Result<usize, PolicyError> {
        self.check_indices(y_hat, a)?;
        Ok(self.sample(y_hat, a, rng))
    }

    fn check_indices(&self, y_hat: usize, a: usize) -> Result<(), PolicyError> {
        if y_hat >= self.n_classes() {
            return Err(PolicyError::OutOfRange {
                kind: "class",
                index: y_hat,
                size: self.n_classes(),
            });
        }
        if a >= self.n_groups() {
            return Err(PolicyError::OutOfRange {
                kind: "group",
                index: a,
                size: self.n_groups(),
            });
        }
        Ok(())
    }

    fn sample<R: RngCore>(&self, y_hat: usize, a: usize, rng: &mut R) -> usize {
        let col = self.p[a].column(y_hat);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last = 0;
        for (i, &p) in col.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last = i;
                if u < cum {
                    return i;
                }
            }
        }
        last
    }

    /// Samples one adjusted label per row; row `r` uses the stream of `row_ids[r]`.
    pub fn predict_rows(
        &self,
        y_hat: &[usize],
        a: &[usize],
        row_ids: &[usize],
        seed: u64,
    ) -> Result<Vec<usize>, PolicyError> {
        y_hat
            .iter()
            .zip(a)
            .zip(row_ids)
            .map(|((&k, &g), &r)| {
                self.check_indices(k, g)?;
                Ok(self.sample(k, g, &mut row_rng(seed, r as u64)))
            })
            .collect()
    }

    /// Most likely class per column. Kept only to demonstrate that it is not a
    /// valid way to apply the policy.
    pub fn argmax_predict(&self, y_hat: usize, a: usize) -> usize {
        let col = self.p[a].column(y_hat);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i] > col[best] {
                best = i;
            }
        }
        best
    }

    /// Maps a dataset's own label dictionaries onto the policy's.
    pub fn align(&self, ds: &AdjustmentDataset) -> Result<AlignedRows, PolicyError> {
        let lookup = |kind: &'static str, names: &[String], own: &[String]| -> Result<Vec<usize>, PolicyError> {
            own.iter()
                .map(|n| {
                    names
                        .iter()
                        .position(|m| m == n)
                        .ok_or_else(|| PolicyError::SpaceMismatch { kind, name: n.clone() })
                })
                .collect()
        };
        let classes = lookup("class", &self.class_names, ds.class_names())?;
        let groups = lookup("group", &self.group_names, ds.group_names())?;
        let a: Vec<usize> = ds.a().iter().map(|&g| groups[g]).collect();
        if let Some(&g) = a.iter().find(|&&g| self.meta.training_group_counts[g] == 0) {
            return Err(PolicyError::UnseenGroup(self.group_names[g].clone()));
        }
        Ok(AlignedRows {
            y: ds.y().iter().map(|&j| classes[j]).collect(),
            y_hat: ds.y_hat().iter().map(|&k| classes[k]).collect(),
            a,
        })
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            version: POLICY_FORMAT_VERSION,
            orientation: ORIENTATION.to_string(),
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
            matrices: self.p.iter().map(matrix_rows).collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let file: PolicyFile = serde_json::from_str(text).map_err(|e| PolicyError::Json(e.to_string()))?;
        if file.version != POLICY_FORMAT_VERSION {
            return Err(PolicyError::Version(file.version));
        }
        let c = file.class_names.len();
        let p = file
            .matrices
            .iter()
            .map(|rows| {
                if rows.len() != c || rows.iter().any(|r| r.len() != c) {
                    return Err(PolicyError::Malformed(format!("matrix is not {c}x{c}")));
                }
                Ok(Matrix::from_fn(c, c, |i, k| rows[i][k]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_matrices(file.class_names, file.group_names, p, file.meta)
    }
}

const ORIENTATION: &str = "matrices[a][i][k] = Pr(Y_adj = i | Y_hat = k, A = a)";

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    version: u32,
    orientation: String,
    class_names: Vec<String>,
    group_names: Vec<String>,
    matrices: Vec<Vec<Vec<f64>>>,
    meta: PolicyMeta,
}

/// Generator for row `row` of a batch seeded by `seed`.
pub fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

/// Post-adjustment confusions `W^a = P^a z[a]`.
pub fn analytic_confusions(policy: &AdjustmentPolicy, em: &EmpiricalModel) -> Vec<Matrix> {
    policy.p.iter().zip(&em.z).map(|(p, z)| p * z).collect()
}
