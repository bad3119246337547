//! Synthetic data regimes, the factorial adjustment experiment and its OLS
//! meta-regression.
//!
//! A regime fixes the number of groups, the class proportions (identical in
//! every group), the group proportions and the predictive bias. The blackbox
//! confusion of every group has a constant true detection rate on the
//! diagonal with the remaining mass split evenly over the other classes. The
//! majority group (group 0) has TDR [`BASE_TDR`]; biased groups have
//! `BASE_TDR - delta`.
//!
//! Only the low bias (a 10 point TDR gap) and "high bias puts the minority at
//! chance" are pinned down externally; the remaining constants below are
//! declared stand-ins, so the regression reproduces signs and ordering rather
//! than magnitudes.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data_model::AdjustmentDataset;
use crate::estimation::fit_empirical;
use crate::evaluation::evaluate_analytic;
use crate::fairness_lp::{Criterion, FairnessSpec, ObjectiveKind, ObjectiveSpec};
use crate::lp_solver::SolverOptions;
use crate::policy::AdjustmentPolicy;
use crate::{adjust_model, Error};

pub const CLASSES: usize = 3;
pub const DEFAULT_N: usize = 1000;
pub const BASE_TDR: f64 = 0.80;
pub const LOW_BIAS: f64 = 0.10;
pub const MEDIUM_BIAS: f64 = 0.25;
pub const HIGH_BIAS: f64 = BASE_TDR - 1.0 / 3.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("design matrix is rank deficient (column `{0}`)")]
    RankDeficient(String),
    #[error("no usable rows for the regression")]
    NoRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassBalance {
    Balanced,
    OneRare,
    TwoRare,
}

impl ClassBalance {
    pub const ALL: [ClassBalance; 3] = [ClassBalance::Balanced, ClassBalance::OneRare, ClassBalance::TwoRare];

    pub fn proportions(self) -> Vec<f64> {
        match self {
            ClassBalance::Balanced => vec![1.0 / 3.0; 3],
            ClassBalance::OneRare => vec![0.45, 0.45, 0.10],
            ClassBalance::TwoRare => vec![0.80, 0.10, 0.10],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ClassBalance::Balanced => "Balanced",
            ClassBalance::OneRare => "One Rare",
            ClassBalance::TwoRare => "Two Rare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupBalance {
    NoMinority,
    OneSlight,
    OneStrong,
    TwoSlight,
    TwoStrong,
}

impl GroupBalance {
    pub fn levels(groups: usize) -> &'static [GroupBalance] {
        use GroupBalance::*;
        if groups == 2 {
            &[NoMinority, OneSlight, OneStrong]
        } else {
            &[NoMinority, OneSlight, OneStrong, TwoSlight, TwoStrong]
        }
    }

    pub fn proportions(self, groups: usize) -> Option<Vec<f64>> {
        use GroupBalance::*;
        match (groups, self) {
            (2, NoMinority) => Some(vec![0.5, 0.5]),
            (2, OneSlight) => Some(vec![0.65, 0.35]),
            (2, OneStrong) => Some(vec![0.85, 0.15]),
            (3, NoMinority) => Some(vec![1.0 / 3.0; 3]),
            (3, OneSlight) => Some(vec![0.40, 0.40, 0.20]),
            (3, OneStrong) => Some(vec![0.45, 0.45, 0.10]),
            (3, TwoSlight) => Some(vec![0.50, 0.25, 0.25]),
            (3, TwoStrong) => Some(vec![0.70, 0.15, 0.15]),
            _ => None,
        }
    }

    pub fn label(self, groups: usize) -> &'static str {
        use GroupBalance::*;
        match (groups, self) {
            (_, NoMinority) => "No Minority",
            (2, OneSlight) => "Slight Minority",
            (2, OneStrong) => "Strong Minority",
            (_, OneSlight) => "One Slight Minority",
            (_, OneStrong) => "One Strong Minority",
            (_, TwoSlight) => "Two Slight Minorities",
            (_, TwoStrong) => "Two Strong Minorities",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredBias {
    Low,
    Medium,
    High,
    LowOne,
    LowTwo,
    MediumOne,
    MediumTwo,
    HighOne,
    HighTwo,
}

impl PredBias {
    pub fn levels(groups: usize) -> &'static [PredBias] {
        use PredBias::*;
        if groups == 2 {
            &[Low, Medium, High]
        } else {
            &[LowOne, LowTwo, MediumOne, MediumTwo, HighOne, HighTwo]
        }
    }

    pub fn delta(self) -> f64 {
        use PredBias::*;
        match self {
            Low | LowOne | LowTwo => LOW_BIAS,
            Medium | MediumOne | MediumTwo => MEDIUM_BIAS,
            High | HighOne | HighTwo => HIGH_BIAS,
        }
    }

    /// How many non-majority groups carry the bias.
    pub fn biased_groups(self) -> usize {
        use PredBias::*;
        match self {
            LowTwo | MediumTwo | HighTwo => 2,
            _ => 1,
        }
    }

    pub fn label(self) -> &'static str {
        use PredBias::*;
        match self {
            Low => "Low",
            Medium => "Medium",
            High => "High",
            LowOne => "Low One",
            LowTwo => "Low Two",
            MediumOne => "Medium One",
            MediumTwo => "Medium Two",
            HighOne => "High One",
            HighTwo => "High Two",
        }
    }
}

/// One synthetic data regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub n: usize,
    pub groups: usize,
    pub class_balance: ClassBalance,
    pub group_balance: GroupBalance,
    pub pred_bias: PredBias,
    pub seed: u64,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 {
            return Err(SynthError::InvalidRegime("n must be positive".into()));
        }
        if self.groups != 2 && self.groups != 3 {
            return Err(SynthError::InvalidRegime(format!(
                "{} groups (expected 2 or 3)",
                self.groups
            )));
        }
        if !GroupBalance::levels(self.groups).contains(&self.group_balance) {
            return Err(SynthError::InvalidRegime(format!(
                "group balance {:?} needs 3 groups",
                self.group_balance
            )));
        }
        if !PredBias::levels(self.groups).contains(&self.pred_bias) {
            return Err(SynthError::InvalidRegime(format!(
                "bias level {:?} is not defined for {} groups",
                self.pred_bias, self.groups
            )));
        }
        Ok(())
    }

    /// Per-group true detection rates: biased groups are the last
    /// `biased_groups()` groups, i.e. the smallest ones.
    pub fn group_tdrs(&self) -> Vec<f64> {
        let biased = self.pred_bias.biased_groups().min(self.groups - 1);
        (0..self.groups)
            .map(|a| {
                if a >= self.groups - biased {
                    BASE_TDR - self.pred_bias.delta()
                } else {
                    BASE_TDR
                }
            })
            .collect()
    }

    pub fn generator(&self) -> Result<ConfusionGenerator, SynthError> {
        self.validate()?;
        let tdrs = self.group_tdrs();
        Ok(ConfusionGenerator {
            class_probs: self.class_balance.proportions(),
            group_probs: self.group_balance.proportions(self.groups).expect("validated"),
            tdr: tdrs.iter().map(|&t| vec![t; CLASSES]).collect(),
            class_names: (0..CLASSES).map(|c| format!("c{c}")).collect(),
            group_names: (0..self.groups).map(|a| format!("g{a}")).collect(),
        })
    }
}

/// Draws `(y, y_hat, a)` i.i.d.: `a` and `y` independent, then `y_hat = y`
/// with probability `tdr[a][y]` and otherwise uniform over the other classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionGenerator {
    pub class_probs: Vec<f64>,
    pub group_probs: Vec<f64>,
    pub tdr: Vec<Vec<f64>>,
    pub class_names: Vec<String>,
    pub group_names: Vec<String>,
}

impl ConfusionGenerator {
    pub fn generate(&self, n: usize, seed: u64) -> Result<AdjustmentDataset, Error> {
        let c = self.class_probs.len();
        let invalid = |e: rand::distr::weighted::Error| Error::Invalid(format!("generator weights: {e}"));
        let groups = WeightedIndex::new(&self.group_probs).map_err(invalid)?;
        let classes = WeightedIndex::new(&self.class_probs).map_err(invalid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::with_capacity(n);
        let mut y_hat = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        for _ in 0..n {
            let g = groups.sample(&mut rng);
            let j = classes.sample(&mut rng);
            let k = if rng.random::<f64>() < self.tdr[g][j] {
                j
            } else {
                let other = rng.random_range(0..c - 1);
                if other >= j {
                    other + 1
                } else {
                    other
                }
            };
            y.push(j);
            y_hat.push(k);
            a.push(g);
        }
        Ok(AdjustmentDataset::new(
            y,
            y_hat,
            a,
            self.class_names.clone(),
            self.group_names.clone(),
        )?)
    }

    /// The generating confusion `Pr(Y_hat = k | Y = j, A = a)`.
    pub fn true_confusion(&self, a: usize) -> DMatrix<f64> {
        let c = self.class_probs.len();
        DMatrix::from_fn(c, c, |k, j| {
            if k == j {
                self.tdr[a][j]
            } else {
                (1.0 - self.tdr[a][j]) / (c - 1) as f64
            }
        })
    }
}

/// Draws a dataset for `spec`.
pub fn generate(spec: &RegimeSpec) -> Result<AdjustmentDataset, Error> {
    let generator = spec.generator().map_err(|e| Error::Invalid(e.to_string()))?;
    generator.generate(spec.n, spec.seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of a regime, a hash of the base seed and the regime's levels.
pub fn regime_seed(base_seed: u64, n: usize, groups: usize, cb: ClassBalance, gb: GroupBalance, pb: PredBias) -> u64 {
    [n as u64, groups as u64, cb as u64, gb as u64, pb as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |h, v| splitmix64(h ^ v))
}

/// All 117 regimes (27 with two groups, 90 with three).
pub fn full_grid(n: usize, base_seed: u64) -> Vec<RegimeSpec> {
    let mut out = Vec::new();
    for groups in [2, 3] {
        for &class_balance in &ClassBalance::ALL {
            for &group_balance in GroupBalance::levels(groups) {
                for &pred_bias in PredBias::levels(groups) {
                    out.push(RegimeSpec {
                        n,
                        groups,
                        class_balance,
                        group_balance,
                        pred_bias,
                        seed: regime_seed(base_seed, n, groups, class_balance, group_balance, pred_bias),
                    });
                }
            }
        }
    }
    out
}

/// One adjustment of the factorial experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub groups: usize,
    pub class_balance: ClassBalance,
    pub group_balance: GroupBalance,
    pub pred_bias: PredBias,
    pub seed: u64,
    pub objective: ObjectiveKind,
    pub criterion: Criterion,
    pub status: String,
    pub trivial: bool,
    pub acc_before: f64,
    pub acc_after: f64,
    /// Relative change `(after - before) / before`.
    pub acc_change: f64,
    pub tdr_before: f64,
    pub tdr_after: f64,
    pub tdr_change: f64,
}

impl ExperimentRow {
    pub fn is_optimal(&self) -> bool {
        self.status == "Optimal"
    }
}

/// Runs every `(objective, criterion)` combination on every regime in `regimes`.
/// Failures are recorded per row with `NaN` outcomes.
pub fn run_regimes(regimes: &[RegimeSpec], objectives: &[ObjectiveKind], criteria: &[Criterion]) -> Vec<ExperimentRow> {
    let solver = SolverOptions::default();
    regimes
        .par_iter()
        .flat_map_iter(|spec| {
            let combos: Vec<(ObjectiveKind, Criterion)> = objectives
                .iter()
                .flat_map(|&o| criteria.iter().map(move |&c| (o, c)))
                .collect();
            let fitted = generate(spec).and_then(|ds| Ok((fit_empirical(&ds, 0.0)?, ds)));
            combos
                .into_iter()
                .map(|(objective, criterion)| {
                    let mut row = ExperimentRow {
                        groups: spec.groups,
                        class_balance: spec.class_balance,
                        group_balance: spec.group_balance,
                        pred_bias: spec.pred_bias,
                        seed: spec.seed,
                        objective,
                        criterion,
                        status: String::new(),
                        trivial: false,
                        acc_before: f64::NAN,
                        acc_after: f64::NAN,
                        acc_change: f64::NAN,
                        tdr_before: f64::NAN,
                        tdr_after: f64::NAN,
                        tdr_change: f64::NAN,
                    };
                    let (model, ds) = match &fitted {
                        Ok(v) => v,
                        Err(_) => {
                            row.status = "EstimationFailed".into();
                            return row;
                        }
                    };
                    let identity = AdjustmentPolicy::identity(ds.class_names().to_vec(), ds.group_names().to_vec());
                    let before = evaluate_analytic(&identity, model);
                    row.acc_before = before.accuracy;
                    row.tdr_before = before.mean_tdr;
                    let spec = FairnessSpec::exact(criterion);
                    match adjust_model(
                        model.clone(),
                        ds,
                        &ObjectiveSpec::of_kind(objective),
                        &spec,
                        &solver,
                        Some(row.seed),
                    ) {
                        Ok(fit) => {
                            let after = evaluate_analytic(&fit.policy, &fit.model);
                            row.status = "Optimal".into();
                            row.trivial = after.trivial;
                            row.acc_after = after.accuracy;
                            row.tdr_after = after.mean_tdr;
                            row.acc_change = (after.accuracy - before.accuracy) / before.accuracy;
                            row.tdr_change = (after.mean_tdr - before.mean_tdr) / before.mean_tdr;
                        }
                        Err(Error::Solve(status)) => row.status = format!("{status:?}"),
                        Err(e) => row.status = format!("Error: {e}"),
                    }
                    row
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// The full factorial experiment: 117 regimes x 2 objectives x 4 criteria.
pub fn run_grid(base_seed: u64, objectives: &[ObjectiveKind], criteria: &[Criterion]) -> Vec<ExperimentRow> {
    run_regimes(&full_grid(DEFAULT_N, base_seed), objectives, criteria)
}

pub fn experiment_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(
        "groups,class_balance,group_balance,pred_bias,seed,objective,criterion,status,trivial,acc_before,acc_after,acc_change,tdr_before,tdr_after,tdr_change\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{},{},{},{},{},{},{},{},{},{},{}",
            r.groups,
            r.class_balance,
            r.group_balance,
            r.pred_bias,
            r.seed,
            r.objective,
            r.criterion,
            r.status,
            r.trivial,
            r.acc_before,
            r.acc_after,
            r.acc_change,
            r.tdr_before,
            r.tdr_after,
            r.tdr_change
        );
    }
    out
}

/// A regression term: a factor and one of its levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Term {
    pub factor: String,
    pub level: String,
}

impl Term {
    fn new(factor: &str, level: &str) -> Self {
        Self {
            factor: factor.into(),
            level: level.into(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.factor, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    /// Intercept first, then one term per non-reference level.
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// The dropped level of every factor, in factor order.
    pub reference_levels: Vec<Term>,
    pub r_squared: f64,
    pub residual_df: usize,
    pub n: usize,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, factor: &str, level: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t.factor == factor && t.level == level)
            .map(|i| self.coefficients[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    AccChange,
    TdrChange,
}

/// Least squares via Householder QR with 95% t-intervals.
pub fn ols(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, usize, Vec<f64>), SynthError> {
    let (n, p) = x.shape();
    if n == 0 || n < p {
        return Err(SynthError::NoRows);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(i) = (0..p).find(|&i| r[(i, i)].abs() <= 1e-10 * scale.max(1.0)) {
        return Err(SynthError::RankDeficient(names.get(i).cloned().unwrap_or_default()));
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| SynthError::RankDeficient(String::new()))?;
    let residuals = y - x * &beta;
    let sse = residuals.norm_squared();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let df = n - p;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| SynthError::RankDeficient(String::new()))?;
    let (sigma2, t) = if df > 0 {
        let t = StudentsT::new(0.0, 1.0, df as f64)
            .expect("positive df")
            .inverse_cdf(0.975);
        (sse / df as f64, t)
    } else {
        (f64::NAN, f64::NAN)
    };
    let se: Vec<f64> = (0..p).map(|i| (sigma2 * rinv.row(i).norm_squared()).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    let lo = coef
        .iter()
        .zip(&se)
        .map(|(b, s)| if *s == 0.0 { *b } else { b - t * s })
        .collect();
    let hi = coef
        .iter()
        .zip(&se)
        .map(|(b, s)| if *s == 0.0 { *b } else { b + t * s })
        .collect();
    Ok((coef, se, lo, hi, r_squared, df, residuals.iter().copied().collect()))
}

/// Factors, their levels in display order, and the reference (first) level.
fn factors(groups: usize) -> Vec<(&'static str, Vec<String>)> {
    vec![
        ("Loss", vec!["Unweighted".into(), "Weighted".into()]),
        (
            "Goal",
            vec![
                "Equalized Odds".into(),
                "Demographic Parity".into(),
                "Equal Opportunity".into(),
                "Term-by-Term".into(),
            ],
        ),
        (
            "Group Balance",
            GroupBalance::levels(groups)
                .iter()
                .map(|g| g.label(groups).to_string())
                .collect(),
        ),
        (
            "Class Balance",
            ClassBalance::ALL.iter().map(|c| c.label().to_string()).collect(),
        ),
        (
            "Pred Bias",
            PredBias::levels(groups).iter().map(|b| b.label().to_string()).collect(),
        ),
    ]
}

pub fn goal_label(c: Criterion) -> &'static str {
    match c {
        Criterion::ClasswiseOdds => "Equalized Odds",
        Criterion::DemographicParity => "Demographic Parity",
        Criterion::EqualOpportunity => "Equal Opportunity",
        Criterion::TermByTerm => "Term-by-Term",
    }
}

fn row_levels(r: &ExperimentRow) -> [String; 5] {
    let loss = match r.objective {
        ObjectiveKind::Weighted => "Weighted",
        _ => "Unweighted",
    };
    [
        loss.into(),
        goal_label(r.criterion).into(),
        r.group_balance.label(r.groups).into(),
        r.class_balance.label().into(),
        r.pred_bias.label().into(),
    ]
}

/// One-hot OLS of an outcome on the experiment factors for the rows with
/// `groups` protected groups. Non-optimal rows are dropped.
pub fn ols_fit(table: &[ExperimentRow], groups: usize, outcome: Outcome) -> Result<RegressionResult, SynthError> {
    let rows: Vec<&ExperimentRow> = table
        .iter()
        .filter(|r| r.groups == groups && r.is_optimal())
        .filter(|r| match outcome {
            Outcome::AccChange => r.acc_change.is_finite(),
            Outcome::TdrChange => r.tdr_change.is_finite(),
        })
        .collect();
    if rows.is_empty() {
        return Err(SynthError::NoRows);
    }
    let factors = factors(groups);
    let mut terms = vec![Term::new("Intercept", "--")];
    let mut reference_levels = Vec::new();
    for (f, levels) in &factors {
        reference_levels.push(Term::new(f, &levels[0]));
        terms.extend(levels[1..].iter().map(|l| Term::new(f, l)));
    }
    let x = DMatrix::from_fn(rows.len(), terms.len(), |i, t| {
        if t == 0 {
            return 1.0;
        }
        let levels = row_levels(rows[i]);
        let term = &terms[t];
        let fi = factors
            .iter()
            .position(|(f, _)| *f == term.factor)
            .expect("known factor");
        f64::from(u8::from(levels[fi] == term.level))
    });
    let y = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|r| match outcome {
            Outcome::AccChange => r.acc_change,
            Outcome::TdrChange => r.tdr_change,
        }),
    );
    let names: Vec<String> = terms.iter().map(Term::to_string).collect();
    let (coefficients, std_errors, ci_low, ci_high, r_squared, residual_df, residuals) = ols(&x, &y, &names)?;
    Ok(RegressionResult {
        terms,
        coefficients,
        std_errors,
        ci_low,
        ci_high,
        reference_levels,
        r_squared,
        residual_df,
        n: rows.len(),
        residuals,
    })
}

/// Side-by-side table of the accuracy and TDR models, one line per level.
pub fn format_regression_table(title: &str, acc: &RegressionResult, tdr: &RegressionResult) -> String {
    let cell =
        |r: &RegressionResult, i: usize| format!("{:.2} ({:.2}, {:.2})", r.coefficients[i], r.ci_low[i], r.ci_high[i]);
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{:<16} {:<24} {:<24} {:<24}",
        "Hyperparameter", "Level", "Change in Acc (CI)", "Change in TDR (CI)"
    );
    let _ = writeln!(
        out,
        "{:<16} {:<24} {:<24} {:<24}",
        "Intercept",
        "--",
        cell(acc, 0),
        cell(tdr, 0)
    );
    for reference in &acc.reference_levels {
        let _ = writeln!(
            out,
            "{:<16} {:<24} {:<24} {:<24}",
            reference.factor, reference.level, "--", "--"
        );
        for (i, term) in acc
            .terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.factor == reference.factor)
        {
            let _ = writeln!(
                out,
                "{:<16} {:<24} {:<24} {:<24}",
                "",
                term.level,
                cell(acc, i),
                cell(tdr, i)
            );
        }
    }
    let _ = writeln!(
        out,
        "n = {}, residual df = {}, R^2 (acc) = {:.3}, R^2 (tdr) = {:.3}",
        acc.n, acc.residual_df, acc.r_squared, tdr.r_squared
    );
    out
}

/// Fraction of optimal rows with a trivial adjusted predictor for `objective`.
pub fn triviality_rate(rows: &[ExperimentRow], objective: ObjectiveKind) -> f64 {
    let sel: Vec<&ExperimentRow> = rows
        .iter()
        .filter(|r| r.objective == objective && r.is_optimal())
        .collect();
    sel.iter().filter(|r| r.trivial).count() as f64 / sel.len().max(1) as f64
}
