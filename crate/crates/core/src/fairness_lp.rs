//! Linear program over the adjustment matrices `P^a = Pr(Y_adj | Y_hat, A = a)`.
//!
//! Every quantity the fairness criteria constrain is linear in `P^a`:
//!
//! * confusion entries `W^a = P^a z[a]`,
//! * false detection rates `FDR^a_c = sum_j P^a_{cj} v[a][j][c]`,
//! * class rates `D^a = P^a Pr(Y_hat | A = a)`.
//!
//! A fairness row is the difference of one such functional between two groups.
//! Exact fairness puts the rows in the equality block; a relaxation `eps > 0`
//! bounds each row by `+-eps` in the inequality block.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{EmpiricalModel, Matrix};
use crate::lp_solver::{self, ConstraintBlock, LPSolution, LinearProgram, LpError, SolverOptions};

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("weighted loss needs Pr(Y={class}, A={group}) > 0")]
    ZeroJointCell { group: usize, class: usize },
    #[error("invalid custom loss: {0}")]
    InvalidLoss(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Which multiclass fairness notion the adjusted predictor must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Every entry of `W^a` equal across groups.
    TermByTerm,
    /// Diagonals of `W^a` and false detection rates equal across groups.
    ClasswiseOdds,
    /// Diagonals of `W^a` equal across groups.
    EqualOpportunity,
    /// `Pr(Y_adj | A = a)` equal across groups.
    DemographicParity,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::TermByTerm,
        Criterion::ClasswiseOdds,
        Criterion::EqualOpportunity,
        Criterion::DemographicParity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::TermByTerm => "term-by-term",
            Criterion::ClasswiseOdds => "classwise",
            Criterion::EqualOpportunity => "opportunity",
            Criterion::DemographicParity => "parity",
        }
    }

    /// Number of constrained scalars per group pair.
    pub fn scalars_per_pair(self, classes: usize) -> usize {
        match self {
            Criterion::TermByTerm => classes * classes,
            Criterion::ClasswiseOdds => 2 * classes,
            Criterion::EqualOpportunity | Criterion::DemographicParity => classes,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown criterion `{s}`"))
    }
}

/// Which group pairs carry fairness rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Every unordered pair `(a, a')`.
    AllPairs,
    /// `(0, a)` for every `a > 0`.
    Star,
}

impl Pairing {
    pub fn pairs(self, groups: usize) -> Vec<(usize, usize)> {
        match self {
            Pairing::Star => (1..groups).map(|a| (0, a)).collect(),
            Pairing::AllPairs => (0..groups).flat_map(|a| (a + 1..groups).map(move |b| (a, b))).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessSpec {
    pub criterion: Criterion,
    /// Largest allowed absolute difference per constrained scalar.
    pub epsilon: f64,
    pub pairing: Pairing,
}

impl FairnessSpec {
    /// Star pairing for exact fairness (equivalent by transitivity), all pairs
    /// once relaxed so that no pair may drift apart by more than `epsilon`.
    pub fn new(criterion: Criterion, epsilon: f64) -> Result<Self, FairnessError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(FairnessError::InvalidEpsilon(epsilon));
        }
        let pairing = if epsilon == 0.0 {
            Pairing::Star
        } else {
            Pairing::AllPairs
        };
        Ok(Self {
            criterion,
            epsilon,
            pairing,
        })
    }

    pub fn exact(criterion: Criterion) -> Self {
        Self::new(criterion, 0.0).expect("zero epsilon is valid")
    }

    pub fn with_pairing(mut self, pairing: Pairing) -> Self {
        self.pairing = pairing;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// Zero-one loss: minimizes the probability of a mismatch.
    Unweighted,
    /// Loss `1 / Pr(Y = j, A = a)`: maximizes the summed true detection rates.
    Weighted,
    /// User-supplied `l(i, j, a)`.
    Custom,
}

impl ObjectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::Unweighted => "unweighted",
            ObjectiveKind::Weighted => "weighted",
            ObjectiveKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// `custom_loss[a][(i, j)] = l(i, j, a)`; present iff `kind` is `Custom`.
    pub custom_loss: Option<Vec<Matrix>>,
}

impl ObjectiveSpec {
    pub fn unweighted() -> Self {
        Self {
            kind: ObjectiveKind::Unweighted,
            custom_loss: None,
        }
    }

    pub fn weighted() -> Self {
        Self {
            kind: ObjectiveKind::Weighted,
            custom_loss: None,
        }
    }

    pub fn of_kind(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            custom_loss: None,
        }
    }

    /// Custom loss; diagonal entries are zeroed since correct predictions carry no loss.
    pub fn custom(mut loss: Vec<Matrix>) -> Result<Self, FairnessError> {
        for l in &mut loss {
            if l.nrows() != l.ncols() {
                return Err(FairnessError::InvalidLoss("loss matrices must be square".into()));
            }
            if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(FairnessError::InvalidLoss(
                    "entries must be finite and non-negative".into(),
                ));
            }
            l.fill_diagonal(0.0);
        }
        Ok(Self {
            kind: ObjectiveKind::Custom,
            custom_loss: Some(loss),
        })
    }
}

/// Bijection between `(group, adjusted class i, predicted class k)` and the
/// flat variable index of `P^a_{ik}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarIndex {
    pub groups: usize,
    pub classes: usize,
}

impl VarIndex {
    pub fn len(&self) -> usize {
        self.groups * self.classes * self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, a: usize, i: usize, k: usize) -> usize {
        (a * self.classes + i) * self.classes + k
    }

    pub fn decode(&self, idx: usize) -> (usize, usize, usize) {
        let c = self.classes;
        (idx / (c * c), (idx / c) % c, idx % c)
    }
}

/// What a fairness row constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `W^a_{ij}`.
    Confusion { i: usize, j: usize },
    /// `W^a_{cc}`.
    TrueDetection(usize),
    /// `FDR^a_c`.
    FalseDetection(usize),
    /// `D^a_c`.
    ClassRate(usize),
}

/// A sparse linear functional `f_a(P^a) - f_b(P^b)` for one group pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessRow {
    pub coeffs: Vec<(usize, f64)>,
    pub pair: (usize, usize),
    pub quantity: Quantity,
}

impl FairnessRow {
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut row = vec![0.0; n];
        for &(j, v) in &self.coeffs {
            row[j] += v;
        }
        row
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }
}

/// Coefficient of `P^a_{ik}`: `sum_{j != i} z[a][k][j] Pr(A = a, Y = j) l(i, j, a)`.
pub fn objective_vector(em: &EmpiricalModel, obj: &ObjectiveSpec) -> Result<Vec<f64>, FairnessError> {
    let (g, c) = (em.n_groups(), em.n_classes());
    let vi = VarIndex { groups: g, classes: c };
    let loss = |a: usize, i: usize, j: usize| -> Result<f64, FairnessError> {
        match obj.kind {
            ObjectiveKind::Unweighted => Ok(1.0),
            ObjectiveKind::Weighted => {
                let p = em.p_ya[a][j];
                if p > 0.0 {
                    Ok(1.0 / p)
                } else {
                    Err(FairnessError::ZeroJointCell { group: a, class: j })
                }
            }
            ObjectiveKind::Custom => {
                let l = obj
                    .custom_loss
                    .as_ref()
                    .ok_or_else(|| FairnessError::InvalidLoss("custom objective without loss".into()))?;
                let la = l
                    .get(a)
                    .ok_or_else(|| FairnessError::InvalidLoss("too few groups".into()))?;
                if la.nrows() != c {
                    return Err(FairnessError::InvalidLoss("class dimension mismatch".into()));
                }
                Ok(la[(i, j)])
            }
        }
    };
    let mut coeffs = vec![0.0; vi.len()];
    for a in 0..g {
        for i in 0..c {
            for j in (0..c).filter(|&j| j != i) {
                let weight = em.p_ya[a][j] * loss(a, i, j)?;
                if weight == 0.0 {
                    continue;
                }
                for k in 0..c {
                    coeffs[vi.index(a, i, k)] += em.z[a][(k, j)] * weight;
                }
            }
        }
    }
    Ok(coeffs)
}

/// Fairness functionals for every constrained pair and quantity.
pub fn fairness_rows(em: &EmpiricalModel, spec: &FairnessSpec) -> Vec<FairnessRow> {
    let (g, c) = (em.n_groups(), em.n_classes());
    let vi = VarIndex { groups: g, classes: c };

    // Coefficients of one group's functional, as (variable, value).
    let functional = |a: usize, q: Quantity| -> Vec<(usize, f64)> {
        match q {
            Quantity::Confusion { i, j } => (0..c).map(|k| (vi.index(a, i, k), em.z[a][(k, j)])).collect(),
            Quantity::TrueDetection(cc) => (0..c).map(|k| (vi.index(a, cc, k), em.z[a][(k, cc)])).collect(),
            Quantity::FalseDetection(cc) => (0..c).map(|k| (vi.index(a, cc, k), em.v[a][(k, cc)])).collect(),
            Quantity::ClassRate(cc) => (0..c).map(|k| (vi.index(a, cc, k), em.p_yhat_given_a[a][k])).collect(),
        }
    };

    let quantities: Vec<Quantity> = match spec.criterion {
        Criterion::TermByTerm => (0..c)
            .flat_map(|i| (0..c).map(move |j| Quantity::Confusion { i, j }))
            .collect(),
        Criterion::ClasswiseOdds => (0..c)
            .map(Quantity::TrueDetection)
            .chain((0..c).map(Quantity::FalseDetection))
            .collect(),
        Criterion::EqualOpportunity => (0..c).map(Quantity::TrueDetection).collect(),
        Criterion::DemographicParity => (0..c).map(Quantity::ClassRate).collect(),
    };

    let mut rows = Vec::new();
    for (a, b) in spec.pairing.pairs(g) {
        for &q in &quantities {
            let mut coeffs = functional(a, q);
            coeffs.extend(functional(b, q).into_iter().map(|(j, v)| (j, -v)));
            rows.push(FairnessRow {
                coeffs,
                pair: (a, b),
                quantity: q,
            });
        }
    }
    rows
}

/// The complete program for one (objective, fairness) choice.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledLP {
    pub program: LinearProgram,
    pub var_index: VarIndex,
    pub fairness: Vec<FairnessRow>,
    pub spec: FairnessSpec,
    pub objective_kind: ObjectiveKind,
}

impl AssembledLP {
    pub fn c(&self) -> &[f64] {
        &self.program.objective
    }

    pub fn eq(&self) -> &ConstraintBlock {
        &self.program.eq
    }

    pub fn ub(&self) -> &ConstraintBlock {
        &self.program.ub
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<LPSolution, LpError> {
        let sol = lp_solver::solve(&self.program, opts)?;
        debug_assert_ne!(sol.status, lp_solver::SolveStatus::Unbounded, "box-bounded program");
        Ok(sol)
    }

    /// Text dump: a header, the objective row, then equality rows, `<=` rows
    /// and the variable bounds, coefficients space-separated.
    pub fn to_text(&self) -> String {
        let p = &self.program;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "vars {} eq {} le {}", p.n_vars(), p.eq.len(), p.ub.len());
        let _ = writeln!(out, "obj {}", join(&p.objective));
        for (r, b) in p.eq.rows.iter().zip(&p.eq.rhs) {
            let _ = writeln!(out, "eq {} = {b}", join(r));
        }
        for (r, b) in p.ub.rows.iter().zip(&p.ub.rhs) {
            let _ = writeln!(out, "le {} <= {b}", join(r));
        }
        let _ = writeln!(out, "lower {}", join(&p.lower));
        let _ = writeln!(out, "upper {}", join(&p.upper));
        out
    }
}

/// Combines column-stochasticity, fairness rows and the objective.
pub fn assemble(em: &EmpiricalModel, obj: &ObjectiveSpec, spec: &FairnessSpec) -> Result<AssembledLP, FairnessError> {
    if !(0.0..=1.0).contains(&spec.epsilon) {
        return Err(FairnessError::InvalidEpsilon(spec.epsilon));
    }
    let (g, c) = (em.n_groups(), em.n_classes());
    let vi = VarIndex { groups: g, classes: c };
    let n = vi.len();
    let objective = objective_vector(em, obj)?;

    let mut eq = ConstraintBlock::default();
    for a in 0..g {
        for k in 0..c {
            let mut row = vec![0.0; n];
            for i in 0..c {
                row[vi.index(a, i, k)] = 1.0;
            }
            eq.push(row, 1.0);
        }
    }
    let fairness = fairness_rows(em, spec);
    let mut ub = ConstraintBlock::default();
    for f in &fairness {
        let row = f.dense(n);
        if spec.epsilon == 0.0 {
            eq.push(row, 0.0);
        } else {
            let neg = row.iter().map(|v| -v).collect();
            ub.push(row, spec.epsilon);
            ub.push(neg, spec.epsilon);
        }
    }
    Ok(AssembledLP {
        program: LinearProgram {
            objective,
            eq,
            ub,
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        },
        var_index: vi,
        fairness,
        spec: *spec,
        objective_kind: obj.kind,
    })
}
