//! Command-line entry point.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data_model::{load_dataset, AdjustmentDataset, ColumnSchema, DataError};
use crate::evaluation::{
    crossval, evaluate_analytic_for, evaluate_blackbox, sweep, sweep_csv, CrossValConfig, EvaluationReport,
    RelativeChanges,
};
use crate::fairness_lp::{Criterion, FairnessError, FairnessSpec, ObjectiveKind, ObjectiveSpec};
use crate::lp_solver::{SolveStatus, SolverOptions};
use crate::policy::AdjustmentPolicy;
use crate::synth::{
    experiment_csv, format_regression_table, generate, ols_fit, run_grid, ClassBalance, GroupBalance, Outcome,
    PredBias, RegimeSpec,
};
use crate::{adjust, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INGEST: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;
pub const EXIT_ITERATION_LIMIT: i32 = 6;
pub const EXIT_POLICY: i32 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "multifair",
    version,
    about = "Fair post-processing of multiclass predictions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an adjustment policy on a dataset and report in-sample metrics.
    Adjust(AdjustArgs),
    /// Sample adjusted labels for a dataset with a saved policy.
    Predict(PredictArgs),
    /// Evaluate a saved policy (or the blackbox) on a dataset.
    Evaluate(EvaluateArgs),
    /// K-fold cross-validated adjustment.
    Crossval(CrossvalArgs),
    /// Relax epsilon from 0 to 1 and record the tradeoff curve.
    Sweep(SweepArgs),
    /// Write one synthetic dataset.
    Synth(SynthArgs),
    /// Run the synthetic factorial experiment and its regressions.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Columns {
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long, default_value = "y_hat")]
    pub yhat_col: String,
    #[arg(long, default_value = "a")]
    pub a_col: String,
}

impl Columns {
    fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            y: self.y_col.clone(),
            y_hat: self.yhat_col.clone(),
            a: self.a_col.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriterionArg {
    TermByTerm,
    Classwise,
    Opportunity,
    Parity,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::TermByTerm => Criterion::TermByTerm,
            CriterionArg::Classwise => Criterion::ClasswiseOdds,
            CriterionArg::Opportunity => Criterion::EqualOpportunity,
            CriterionArg::Parity => Criterion::DemographicParity,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Unweighted,
    Weighted,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Unweighted => ObjectiveKind::Unweighted,
            ObjectiveArg::Weighted => ObjectiveKind::Weighted,
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value = "term-by-term")]
    pub criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "weighted")]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    /// Simplex pivot limit.
    #[arg(long, default_value_t = SolverOptions::default().max_iter)]
    pub max_iter: usize,
}

impl FitArgs {
    fn solver(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter,
            ..SolverOptions::default()
        }
    }

    fn spec(&self) -> Result<FairnessSpec, Error> {
        Ok(FairnessSpec::new(self.criterion.into(), self.epsilon)?)
    }

    fn objective(&self) -> ObjectiveSpec {
        ObjectiveSpec::of_kind(self.objective.into())
    }
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for `policy.json` and `report.json`.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub columns: Columns,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Output CSV: the input columns plus `y_adj`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub columns: Columns,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Policy to evaluate; the blackbox itself when omitted.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "term-by-term")]
    pub criterion: CriterionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub columns: Columns,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub columns: Columns,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Criteria to sweep; all four when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub criterion: Vec<CriterionArg>,
    #[arg(long, value_enum, default_value = "weighted")]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    #[command(flatten)]
    pub columns: Columns,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub groups: usize,
    #[arg(long, value_parser = parse_class_balance, default_value = "balanced")]
    pub class_balance: ClassBalance,
    #[arg(long, value_parser = parse_group_balance, default_value = "no-minority")]
    pub group_balance: GroupBalance,
    #[arg(long, value_parser = parse_pred_bias, default_value = "low")]
    pub pred_bias: PredBias,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Output directory for `experiment.csv` and the regression tables.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_class_balance(s: &str) -> Result<ClassBalance, String> {
    match s {
        "balanced" => Ok(ClassBalance::Balanced),
        "one-rare" => Ok(ClassBalance::OneRare),
        "two-rare" => Ok(ClassBalance::TwoRare),
        _ => Err("expected balanced, one-rare or two-rare".into()),
    }
}

fn parse_group_balance(s: &str) -> Result<GroupBalance, String> {
    match s {
        "no-minority" => Ok(GroupBalance::NoMinority),
        "one-slight" | "slight" => Ok(GroupBalance::OneSlight),
        "one-strong" | "strong" => Ok(GroupBalance::OneStrong),
        "two-slight" => Ok(GroupBalance::TwoSlight),
        "two-strong" => Ok(GroupBalance::TwoStrong),
        _ => Err("expected no-minority, one-slight, one-strong, two-slight or two-strong".into()),
    }
}

fn parse_pred_bias(s: &str) -> Result<PredBias, String> {
    Ok(match s {
        "low" => PredBias::Low,
        "medium" => PredBias::Medium,
        "high" => PredBias::High,
        "low-one" => PredBias::LowOne,
        "low-two" => PredBias::LowTwo,
        "medium-one" => PredBias::MediumOne,
        "medium-two" => PredBias::MediumTwo,
        "high-one" => PredBias::HighOne,
        "high-two" => PredBias::HighTwo,
        _ => return Err("expected low, medium, high or <level>-one / <level>-two".into()),
    })
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Data(DataError::Io { .. }) => EXIT_OTHER,
        Error::Data(_) => EXIT_INGEST,
        Error::Estimation(_) | Error::Fairness(FairnessError::ZeroJointCell { .. }) => EXIT_ESTIMATION,
        Error::Fairness(FairnessError::InvalidEpsilon(_)) => EXIT_USAGE,
        Error::Solve(SolveStatus::Infeasible) => EXIT_INFEASIBLE,
        Error::Solve(SolveStatus::IterationLimit) => EXIT_ITERATION_LIMIT,
        Error::Policy(_) => EXIT_POLICY,
        Error::Invalid(_) => EXIT_USAGE,
        _ => EXIT_OTHER,
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let io = |e: std::io::Error| {
        Error::Data(DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

#[derive(Debug, Serialize)]
struct AdjustReport<'a> {
    status: SolveStatus,
    objective_value: f64,
    iterations: usize,
    pre: &'a EvaluationReport,
    post: &'a EvaluationReport,
    change: RelativeChanges,
}

fn load(input: &Path, columns: &Columns) -> Result<AdjustmentDataset, Error> {
    Ok(load_dataset(input, &columns.schema())?)
}

fn load_policy(path: &Path) -> Result<AdjustmentPolicy, Error> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Data(DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    })?;
    Ok(AdjustmentPolicy::from_json(&text)?)
}

pub fn cmd_adjust(args: &AdjustArgs) -> Result<(), Error> {
    let ds = load(&args.input, &args.columns)?;
    let spec = args.fit.spec()?;
    let fit = adjust(
        &ds,
        &args.fit.objective(),
        &spec,
        args.fit.smoothing,
        &args.fit.solver(),
        Some(args.seed),
    )?;
    let identity = AdjustmentPolicy::identity(ds.class_names().to_vec(), ds.group_names().to_vec());
    let pre = evaluate_analytic_for(&identity, &fit.model, spec.criterion);
    let post = evaluate_analytic_for(&fit.policy, &fit.model, spec.criterion);
    let report = AdjustReport {
        status: fit.solution.status,
        objective_value: fit.solution.objective,
        iterations: fit.solution.iterations,
        change: RelativeChanges::between(&pre, &post),
        pre: &pre,
        post: &post,
    };
    write_atomic(&args.output.join("policy.json"), fit.policy.to_json().as_bytes())?;
    write_atomic(&args.output.join("report.json"), to_json(&report).as_bytes())?;
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), Error> {
    let ds = load(&args.input, &args.columns)?;
    let policy = load_policy(&args.policy)?;
    let rows = policy.align(&ds)?;
    let ids: Vec<usize> = (0..ds.len()).collect();
    let preds = policy.predict_rows(&rows.y_hat, &rows.a, &ids, args.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let schema = args.columns.schema();
    let csv_err = |e: csv::Error| Error::Data(DataError::Csv(e));
    w.write_record([schema.y.as_str(), schema.y_hat.as_str(), schema.a.as_str(), "y_adj"])
        .map_err(csv_err)?;
    for (r, (y, k, a)) in ds.rows().enumerate() {
        w.write_record([
            ds.class_names()[y].as_str(),
            ds.class_names()[k].as_str(),
            ds.group_names()[a].as_str(),
            policy.class_names[preds[r]].as_str(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    write_atomic(&args.output, &bytes)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), Error> {
    let ds = load(&args.input, &args.columns)?;
    let report = match &args.policy {
        Some(path) => {
            let policy = load_policy(path)?;
            let mut report = crate::evaluation::evaluate_sampled(&policy, &ds, args.seed)?;
            report.criterion = args.criterion.into();
            report
        }
        None => evaluate_blackbox(&ds, args.criterion.into()),
    };
    write_atomic(&args.output, report.to_json().as_bytes())
}

pub fn cmd_crossval(args: &CrossvalArgs) -> Result<(), Error> {
    if args.folds < 2 {
        return Err(Error::Invalid(format!(
            "--folds must be at least 2, got {}",
            args.folds
        )));
    }
    let ds = load(&args.input, &args.columns)?;
    let cfg = CrossValConfig {
        folds: args.folds,
        seed: args.seed,
        smoothing: args.fit.smoothing,
        solver: args.fit.solver(),
    };
    let report = crossval(&ds, &args.fit.objective(), &args.fit.spec()?, &cfg)?;
    write_atomic(&args.output, report.to_json().as_bytes())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let ds = load(&args.input, &args.columns)?;
    let criteria: Vec<Criterion> = if args.criterion.is_empty() {
        Criterion::ALL.to_vec()
    } else {
        args.criterion.iter().map(|&c| c.into()).collect()
    };
    let rows = sweep(
        &ds,
        &ObjectiveSpec::of_kind(args.objective.into()),
        &criteria,
        args.smoothing,
        &SolverOptions::default(),
    )?;
    write_atomic(&args.output, sweep_csv(&rows).as_bytes())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let spec = RegimeSpec {
        n: args.n,
        groups: args.groups,
        class_balance: args.class_balance,
        group_balance: args.group_balance,
        pred_bias: args.pred_bias,
        seed: args.seed,
    };
    let ds = generate(&spec)?;
    let mut buf = Vec::new();
    ds.write_csv(&mut buf, &ColumnSchema::default())?;
    write_atomic(&args.output, &buf)
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<(), Error> {
    let rows = run_grid(
        args.seed,
        &[ObjectiveKind::Unweighted, ObjectiveKind::Weighted],
        &Criterion::ALL,
    );
    write_atomic(&args.output.join("experiment.csv"), experiment_csv(&rows).as_bytes())?;
    for (groups, name) in [(3, "regression_g3.txt"), (2, "regression_g2.txt")] {
        let fit = |o| ols_fit(&rows, groups, o).map_err(|e| Error::Invalid(e.to_string()));
        let table = format_regression_table(
            &format!("{groups} groups"),
            &fit(Outcome::AccChange)?,
            &fit(Outcome::TdrChange)?,
        );
        write_atomic(&args.output.join(name), table.as_bytes())?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Adjust(a) => cmd_adjust(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Crossval(a) => cmd_crossval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}
