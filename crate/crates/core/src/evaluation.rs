//! Discrimination and fairness metrics, cross-validation and relaxation sweeps.
//!
//! Reports come in two flavours. Analytic reports are exact functions of a
//! policy and an [`EmpiricalModel`]. Sampled reports draw adjusted labels and
//! count; columns of `W^a` for `(Y = j, A = a)` cells absent from the sample
//! are left undefined (`NaN`) and skipped by every average.

use rayon::prelude::*;
use serde::Serialize;

use crate::data_model::{make_splits, AdjustmentDataset};
use crate::estimation::{EmpiricalModel, Matrix};
use crate::fairness_lp::{Criterion, FairnessSpec, ObjectiveSpec};
use crate::lp_solver::{SolveStatus, SolverOptions};
use crate::policy::{analytic_confusions, AdjustmentPolicy, AlignedRows};
use crate::{adjust, adjust_model, estimation, Error};

/// Rows of `W^a` below this are treated as never emitted.
pub const TRIVIAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    /// Mean over groups of the mean diagonal of `W^a`.
    pub mean_tdr: f64,
    /// `tdr[a][c] = W^a_{cc}`.
    pub tdr: Vec<Vec<f64>>,
    /// `fdr[a][c] = Pr(Y_adj = c | Y != c, A = a)`.
    pub fdr: Vec<Vec<f64>>,
    /// Mean over unordered group pairs of the elementwise mean `|W^a - W^b|`.
    pub disparity: f64,
    pub brier: f64,
    /// `TDR + (1 - FDR) - 1` per group and class.
    pub youden_j: Vec<Vec<f64>>,
    /// Some class is never emitted for some group.
    pub trivial: bool,
    pub criterion: Criterion,
    /// Criterion-specific largest mean pairwise gap, see [`sweep_measure`].
    pub sweep_measure: f64,
    #[serde(serialize_with = "crate::estimation::serialize_matrices")]
    pub confusions: Vec<Matrix>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-group metric objects compared by the fairness gap of each criterion.
struct GroupMetrics {
    w: Vec<Matrix>,
    tdr: Vec<Vec<f64>>,
    fdr: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
}

impl GroupMetrics {
    fn youden(&self) -> Vec<Vec<f64>> {
        self.tdr
            .iter()
            .zip(&self.fdr)
            .map(|(t, f)| t.iter().zip(f).map(|(t, f)| t - f).collect())
            .collect()
    }

    fn objects(&self, criterion: Criterion) -> Vec<Vec<f64>> {
        match criterion {
            Criterion::TermByTerm => self.w.iter().map(|m| m.iter().copied().collect()).collect(),
            Criterion::ClasswiseOdds => self.youden(),
            Criterion::EqualOpportunity => self.tdr.clone(),
            Criterion::DemographicParity => self.rates.clone(),
        }
    }

    fn disparity(&self) -> f64 {
        let flat: Vec<Vec<f64>> = self.w.iter().map(|m| m.iter().copied().collect()).collect();
        let gaps: Vec<f64> = pairwise_gaps(&flat);
        if gaps.is_empty() {
            0.0
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        }
    }

    fn gap(&self, criterion: Criterion) -> f64 {
        pairwise_gaps(&self.objects(criterion)).into_iter().fold(0.0, f64::max)
    }

    fn mean_tdr(&self) -> f64 {
        let per_group: Vec<f64> = self.tdr.iter().filter_map(|t| nan_mean(t)).collect();
        per_group.iter().sum::<f64>() / per_group.len().max(1) as f64
    }

    fn trivial(&self) -> bool {
        self.w
            .iter()
            .any(|m| (0..m.nrows()).any(|i| m.row(i).iter().filter(|v| !v.is_nan()).all(|&v| v < TRIVIAL_TOL)))
    }

    fn into_report(self, accuracy: f64, brier: f64, criterion: Criterion) -> EvaluationReport {
        EvaluationReport {
            accuracy,
            brier,
            mean_tdr: self.mean_tdr(),
            disparity: self.disparity(),
            youden_j: self.youden(),
            trivial: self.trivial(),
            sweep_measure: self.gap(criterion),
            criterion,
            tdr: self.tdr,
            fdr: self.fdr,
            confusions: self.w,
        }
    }
}

fn nan_mean(v: &[f64]) -> Option<f64> {
    let (sum, n) = v
        .iter()
        .filter(|x| !x.is_nan())
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean absolute difference over entries defined in both vectors.
fn mean_abs_diff(a: &[f64], b: &[f64]) -> Option<f64> {
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| !x.is_nan() && !y.is_nan())
        .map(|(x, y)| (x - y).abs())
        .collect();
    (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64)
}

fn pairwise_gaps(objects: &[Vec<f64>]) -> Vec<f64> {
    let g = objects.len();
    (0..g)
        .flat_map(|a| (a + 1..g).map(move |b| (a, b)))
        .filter_map(|(a, b)| mean_abs_diff(&objects[a], &objects[b]))
        .collect()
}

fn analytic_metrics(policy: &AdjustmentPolicy, em: &EmpiricalModel) -> GroupMetrics {
    let w = analytic_confusions(policy, em);
    let c = em.n_classes();
    let tdr = w.iter().map(|m| (0..c).map(|j| m[(j, j)]).collect()).collect();
    let fdr = policy
        .p
        .iter()
        .zip(&em.v)
        .map(|(p, v)| {
            let pv = p * v;
            (0..c).map(|j| pv[(j, j)]).collect()
        })
        .collect();
    let rates = policy
        .p
        .iter()
        .zip(&em.p_yhat_given_a)
        .map(|(p, d)| (0..c).map(|i| (0..c).map(|k| p[(i, k)] * d[k]).sum()).collect())
        .collect();
    GroupMetrics { w, tdr, fdr, rates }
}

/// Exact report of `policy` under the distributions in `em`.
///
/// The criterion used for `sweep_measure` is the one the policy was fitted
/// for, falling back to term-by-term.
pub fn evaluate_analytic(policy: &AdjustmentPolicy, em: &EmpiricalModel) -> EvaluationReport {
    let criterion = policy.meta.criterion.unwrap_or(Criterion::TermByTerm);
    evaluate_analytic_for(policy, em, criterion)
}

pub fn evaluate_analytic_for(policy: &AdjustmentPolicy, em: &EmpiricalModel, criterion: Criterion) -> EvaluationReport {
    let metrics = analytic_metrics(policy, em);
    let accuracy = em
        .p_ya
        .iter()
        .zip(&metrics.w)
        .map(|(row, w)| row.iter().enumerate().map(|(j, p)| p * w[(j, j)]).sum::<f64>())
        .sum();
    let brier = analytic_brier(policy, em);
    metrics.into_report(accuracy, brier, criterion)
}

/// Expected Brier score over `(Y, Y_hat, A)` drawn from `em`.
pub fn analytic_brier(policy: &AdjustmentPolicy, em: &EmpiricalModel) -> f64 {
    let c = em.n_classes();
    let mut total = 0.0;
    for (a, row) in em.p_ya.iter().enumerate() {
        for (j, &pj) in row.iter().enumerate() {
            for k in 0..c {
                let mass = pj * em.z[a][(k, j)];
                if mass == 0.0 {
                    continue;
                }
                total += mass * column_brier(&policy.p[a], k, j);
            }
        }
    }
    total
}

fn column_brier(p: &Matrix, k: usize, truth: usize) -> f64 {
    p.column(k)
        .iter()
        .enumerate()
        .map(|(c, &q)| {
            let d = q - if c == truth { 1.0 } else { 0.0 };
            d * d
        })
        .sum()
}

/// Mean over rows of `sum_c (p[a][c][y_hat] - 1[y = c])^2`, in `[0, 2]`.
pub fn brier_score(policy: &AdjustmentPolicy, ds: &AdjustmentDataset) -> Result<f64, Error> {
    let rows = policy.align(ds)?;
    Ok(rows_brier(policy, &rows))
}

fn rows_brier(policy: &AdjustmentPolicy, rows: &AlignedRows) -> f64 {
    let total: f64 = (0..rows.y.len())
        .map(|r| column_brier(&policy.p[rows.a[r]], rows.y_hat[r], rows.y[r]))
        .sum();
    total / rows.y.len() as f64
}

/// Criterion-specific global fairness gap: the largest, over unordered group
/// pairs, of the mean absolute difference of the criterion's metric object
/// (`W^a`, Youden's J, TDR, or `Pr(Y_adj | A)`).
pub fn sweep_measure(policy: &AdjustmentPolicy, em: &EmpiricalModel, criterion: Criterion) -> f64 {
    analytic_metrics(policy, em).gap(criterion)
}

/// Report from observed `(y, y_adj, a)` triples.
fn empirical_report(
    rows: &AlignedRows,
    predictions: &[usize],
    groups: usize,
    classes: usize,
    brier: f64,
    criterion: Criterion,
) -> EvaluationReport {
    let mut joint = vec![vec![vec![0u64; classes]; classes]; groups]; // [a][i][j]
    let mut n_ya = vec![vec![0u64; classes]; groups];
    let mut n_a = vec![0u64; groups];
    let mut hits = 0u64;
    for r in 0..rows.y.len() {
        let (j, i, a) = (rows.y[r], predictions[r], rows.a[r]);
        joint[a][i][j] += 1;
        n_ya[a][j] += 1;
        n_a[a] += 1;
        hits += u64::from(i == j);
    }
    let w: Vec<Matrix> = (0..groups)
        .map(|a| {
            Matrix::from_fn(classes, classes, |i, j| {
                if n_ya[a][j] > 0 {
                    joint[a][i][j] as f64 / n_ya[a][j] as f64
                } else {
                    f64::NAN
                }
            })
        })
        .collect();
    let tdr = w.iter().map(|m| (0..classes).map(|j| m[(j, j)]).collect()).collect();
    let fdr = (0..groups)
        .map(|a| {
            (0..classes)
                .map(|c| {
                    let others: u64 = (0..classes).filter(|&j| j != c).map(|j| n_ya[a][j]).sum();
                    let wrong: u64 = (0..classes).filter(|&j| j != c).map(|j| joint[a][c][j]).sum();
                    if others > 0 {
                        wrong as f64 / others as f64
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        })
        .collect();
    let rates = (0..groups)
        .map(|a| {
            (0..classes)
                .map(|i| {
                    if n_a[a] > 0 {
                        joint[a][i].iter().sum::<u64>() as f64 / n_a[a] as f64
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        })
        .collect();
    let metrics = GroupMetrics { w, tdr, fdr, rates };
    let accuracy = hits as f64 / rows.y.len() as f64;
    metrics.into_report(accuracy, brier, criterion)
}

/// Samples adjusted labels for `ds` (row `r` uses stream `r`) and reports
/// empirical metrics.
pub fn evaluate_sampled(
    policy: &AdjustmentPolicy,
    ds: &AdjustmentDataset,
    seed: u64,
) -> Result<EvaluationReport, Error> {
    let rows = policy.align(ds)?;
    let ids: Vec<usize> = (0..ds.len()).collect();
    let preds = policy.predict_rows(&rows.y_hat, &rows.a, &ids, seed)?;
    let criterion = policy.meta.criterion.unwrap_or(Criterion::TermByTerm);
    Ok(empirical_report(
        &rows,
        &preds,
        policy.n_groups(),
        policy.n_classes(),
        rows_brier(policy, &rows),
        criterion,
    ))
}

/// Empirical report of the blackbox predictions themselves.
pub fn evaluate_blackbox(ds: &AdjustmentDataset, criterion: Criterion) -> EvaluationReport {
    let identity = AdjustmentPolicy::identity(ds.class_names().to_vec(), ds.group_names().to_vec());
    let rows = AlignedRows {
        y: ds.y().to_vec(),
        y_hat: ds.y_hat().to_vec(),
        a: ds.a().to_vec(),
    };
    empirical_report(
        &rows,
        ds.y_hat(),
        ds.n_groups(),
        ds.n_classes(),
        rows_brier(&identity, &rows),
        criterion,
    )
}

/// Relative change `100 (new - old) / old`.
pub fn percent_change(old: f64, new: f64) -> f64 {
    100.0 * (new - old) / old
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeChanges {
    pub accuracy: f64,
    pub mean_tdr: f64,
    pub disparity: f64,
}

impl RelativeChanges {
    pub fn between(pre: &EvaluationReport, post: &EvaluationReport) -> Self {
        Self {
            accuracy: percent_change(pre.accuracy, post.accuracy),
            mean_tdr: percent_change(pre.mean_tdr, post.mean_tdr),
            disparity: percent_change(pre.disparity, post.disparity),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub objective_value: f64,
    pub pre: EvaluationReport,
    pub post: EvaluationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldReport>,
    pub pooled_pre: EvaluationReport,
    pub pooled_post: EvaluationReport,
    /// Percent changes of the pooled out-of-fold predictions.
    pub change: RelativeChanges,
}

impl CrossValReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct CrossValConfig {
    pub folds: usize,
    pub seed: u64,
    pub smoothing: f64,
    pub solver: SolverOptions,
}

/// K-fold cross-validation: fit and solve on the training folds, sample
/// adjusted labels for the held-out fold. Row `r` always draws from stream `r`
/// of `seed`, so pooled predictions do not depend on fold order.
pub fn crossval(
    ds: &AdjustmentDataset,
    obj: &ObjectiveSpec,
    spec: &FairnessSpec,
    cfg: &CrossValConfig,
) -> Result<CrossValReport, Error> {
    let plan = make_splits(ds, cfg.folds, cfg.seed)?;
    let criterion = spec.criterion;
    let fold_results: Vec<Result<(FoldReport, Vec<usize>, Vec<usize>), Error>> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let wrap = |e: Error| Error::Fold {
                fold,
                source: Box::new(e),
            };
            let train_idx = plan.training(fold);
            let test_idx = plan.holdout(fold);
            let train = ds.subset(&train_idx);
            let test = ds.subset(&test_idx);
            let fit = adjust(&train, obj, spec, cfg.smoothing, &cfg.solver, Some(cfg.seed)).map_err(wrap)?;
            let rows = fit.policy.align(&test).map_err(|e| wrap(e.into()))?;
            let preds = fit
                .policy
                .predict_rows(&rows.y_hat, &rows.a, &test_idx, cfg.seed)
                .map_err(|e| wrap(e.into()))?;
            let post = empirical_report(
                &rows,
                &preds,
                ds.n_groups(),
                ds.n_classes(),
                rows_brier(&fit.policy, &rows),
                criterion,
            );
            let report = FoldReport {
                fold,
                train_n: train.len(),
                test_n: test.len(),
                objective_value: fit.solution.objective,
                pre: evaluate_blackbox(&test, criterion),
                post,
            };
            Ok((report, preds, test_idx))
        })
        .collect();

    let mut folds = Vec::with_capacity(cfg.folds);
    let mut pooled = vec![0usize; ds.len()];
    let mut brier_sum = 0.0;
    for result in fold_results {
        let (report, preds, idx) = result?;
        brier_sum += report.post.brier * idx.len() as f64;
        for (&r, &p) in idx.iter().zip(&preds) {
            pooled[r] = p;
        }
        folds.push(report);
    }
    let rows = AlignedRows {
        y: ds.y().to_vec(),
        y_hat: ds.y_hat().to_vec(),
        a: ds.a().to_vec(),
    };
    let pooled_post = empirical_report(
        &rows,
        &pooled,
        ds.n_groups(),
        ds.n_classes(),
        brier_sum / ds.len() as f64,
        criterion,
    );
    let pooled_pre = evaluate_blackbox(ds, criterion);
    let change = RelativeChanges::between(&pooled_pre, &pooled_post);
    Ok(CrossValReport {
        folds,
        pooled_pre,
        pooled_post,
        change,
    })
}

/// One point of a fairness-discrimination sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub criterion: Criterion,
    pub status: SolveStatus,
    pub objective_value: f64,
    pub brier: f64,
    pub sweep_measure: f64,
    pub accuracy: f64,
    pub mean_tdr: f64,
    pub trivial: bool,
}

/// The relaxation grid `0.00, 0.01, ..., 1.00`.
pub fn epsilon_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Solves on the full dataset for every `epsilon` in the grid and criterion.
/// Solver failures are recorded in the row (metrics `NaN`).
pub fn sweep(
    ds: &AdjustmentDataset,
    obj: &ObjectiveSpec,
    criteria: &[Criterion],
    smoothing: f64,
    solver: &SolverOptions,
) -> Result<Vec<SweepRow>, Error> {
    let model = estimation::fit_empirical(ds, smoothing)?;
    let jobs: Vec<(Criterion, f64)> = criteria
        .iter()
        .flat_map(|&c| epsilon_grid().into_iter().map(move |e| (c, e)))
        .collect();
    jobs.into_par_iter()
        .map(|(criterion, epsilon)| {
            let spec = FairnessSpec::new(criterion, epsilon)?;
            match adjust_model(model.clone(), ds, obj, &spec, solver, None) {
                Ok(fit) => {
                    let report = evaluate_analytic_for(&fit.policy, &fit.model, criterion);
                    Ok(SweepRow {
                        epsilon,
                        criterion,
                        status: fit.solution.status,
                        objective_value: fit.solution.objective,
                        brier: brier_score(&fit.policy, ds)?,
                        sweep_measure: report.sweep_measure,
                        accuracy: report.accuracy,
                        mean_tdr: report.mean_tdr,
                        trivial: report.trivial,
                    })
                }
                Err(Error::Solve(status)) => Ok(SweepRow {
                    epsilon,
                    criterion,
                    status,
                    objective_value: f64::NAN,
                    brier: f64::NAN,
                    sweep_measure: f64::NAN,
                    accuracy: f64::NAN,
                    mean_tdr: f64::NAN,
                    trivial: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// CSV with columns `epsilon,criterion,objective_value,brier,sweep_measure,accuracy,mean_tdr,trivial,status`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("epsilon,criterion,objective_value,brier,sweep_measure,accuracy,mean_tdr,trivial,status\n");
    for r in rows {
        out.push_str(&format!(
            "{:.2},{},{},{},{},{},{},{},{:?}\n",
            r.epsilon,
            r.criterion,
            r.objective_value,
            r.brier,
            r.sweep_measure,
            r.accuracy,
            r.mean_tdr,
            r.trivial,
            r.status
        ));
    }
    out
}
