//! Fair post-processing of multiclass blackbox predictions.
//!
//! Given hard predictions `y_hat` of a pre-trained classifier, true labels `y`
//! and a protected attribute `a`, the toolkit learns group-conditional
//! adjustment matrices `P^a = Pr(Y_adj | Y_hat, A = a)` by linear programming
//! so that the randomized predictor `Y_adj` satisfies a multiclass fairness
//! criterion while losing as little accuracy as possible.
//!
//! The pipeline is: [`data_model`] (ingest triples) → [`estimation`]
//! (empirical confusions) → [`fairness_lp`] (assemble) → [`lp_solver`]
//! (simplex) → [`policy`] (sample adjusted labels) → [`evaluation`]
//! (metrics, cross-validation, sweeps). [`synth`] holds the synthetic
//! factorial experiment and its regression analysis; [`cli`] drives it all.

pub mod cli;
pub mod data_model;
pub mod estimation;
pub mod evaluation;
pub mod fairness_lp;
pub mod lp_solver;
pub mod policy;
pub mod synth;

use thiserror::Error;

use crate::data_model::{AdjustmentDataset, DataError};
use crate::estimation::{fit_empirical, EmpiricalModel, EstimationError};
use crate::fairness_lp::{assemble, AssembledLP, FairnessError, FairnessSpec, ObjectiveSpec};
use crate::lp_solver::{LPSolution, LpError, SolveStatus, SolverOptions};
use crate::policy::{AdjustmentPolicy, PolicyError, Provenance};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("linear program ended with status {0:?}")]
    Solve(SolveStatus),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// The innermost error, looking through fold wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Fold { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Everything produced by fitting one adjustment.
#[derive(Debug, Clone)]
pub struct Adjustment {
    pub model: EmpiricalModel,
    pub lp: AssembledLP,
    pub solution: LPSolution,
    pub policy: AdjustmentPolicy,
}

/// Fits the empirical model, solves the program and wraps the solution.
pub fn adjust(
    ds: &AdjustmentDataset,
    obj: &ObjectiveSpec,
    spec: &FairnessSpec,
    smoothing: f64,
    opts: &SolverOptions,
    seed: Option<u64>,
) -> Result<Adjustment, Error> {
    let model = fit_empirical(ds, smoothing)?;
    adjust_model(model, ds, obj, spec, opts, seed)
}

/// As [`adjust`], reusing an already fitted model of `ds`.
pub fn adjust_model(
    model: EmpiricalModel,
    ds: &AdjustmentDataset,
    obj: &ObjectiveSpec,
    spec: &FairnessSpec,
    opts: &SolverOptions,
    seed: Option<u64>,
) -> Result<Adjustment, Error> {
    let lp = assemble(&model, obj, spec)?;
    let solution = lp.solve(opts)?;
    if solution.status != SolveStatus::Optimal {
        return Err(Error::Solve(solution.status));
    }
    let policy = AdjustmentPolicy::from_solution(
        &lp,
        &solution,
        ds.class_names(),
        ds.group_names(),
        Provenance::of(ds, seed),
    )?;
    Ok(Adjustment {
        model,
        lp,
        solution,
        policy,
    })
}
