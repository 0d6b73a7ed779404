//! `cvplan`: plan cross-validation splits, fold counts and resampling sizes.

mod input;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cvplan::combinatorics::{oracle_check, MomentTag, SplitGeometry};
use cvplan::logistic::{algorithm1_optimal_n1, LogisticOptions, VMode};
use cvplan::loss::{estimate_moment_params, LossSpec, MomentParams};
use cvplan::montecarlo::{empirical_cv_moments, regression_recipe, DistSpec, Experiment};
use cvplan::montecarlo::{simulate_table_with, TableId, TableOptions};
use cvplan::regression::{design_stats, regression_optimal_split, regression_table};
use cvplan::split::{optimal_k, optimal_n1};
use cvplan::variance::{j_for_effectiveness, j_for_reduction};
use cvplan::Error;

use input::Table;
use output::{emit, num, opt, Csv, Output};

/// Seed used when neither `--seed` nor `CVPLAN_SEED` is given.
const DEFAULT_SEED: u64 = 42;
const RE_TARGETS: [f64; 4] = [0.80, 0.85, 0.90, 0.95];
const RR_TARGETS: [f64; 4] = [0.1, 0.05, 0.025, 0.01];
const LOSSES: [&str; 5] = ["squared", "qsqrt", "absapprox", "modsq", "doublesq"];

#[derive(Debug)]
pub struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    pub fn usage(msg: String) -> Self {
        CliError { code: 1, msg }
    }

    pub fn io(e: impl fmt::Display) -> Self {
        CliError {
            code: 1,
            msg: format!("write failed: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_numerical() { 2 } else { 1 },
            msg: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Parser)]
#[command(
    name = "cvplan",
    version,
    about = "Variance-optimal cross-validation planning"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// RNG seed for simulations.
    #[arg(long, env = "CVPLAN_SEED", global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal training size for random cross validation.
    PlanSplit(MomentSource),
    /// Optimal number of folds for k-fold cross validation.
    PlanFolds(MomentSource),
    /// Number of resamples meeting an effectiveness or reduction target.
    PlanResamples(ResampleArgs),
    /// Split plan for least-squares regression on a data file.
    RegressionPlan(RegressionArgs),
    /// Split plan for logistic regression on a data file.
    LogisticPlan(LogisticArgs),
    /// Monte Carlo tables or a single free-form experiment.
    Simulate(SimulateArgs),
    /// Compare closed-form split moments with exhaustive enumeration.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct MomentSource {
    /// CSV file with a header row; the sample is one column.
    #[arg(long, required_unless_present = "theoretical")]
    data: Option<PathBuf>,
    /// Column holding the sample (default: the only column).
    #[arg(long, requires = "data")]
    column: Option<String>,
    #[arg(long, default_value = "squared", value_parser = LOSSES)]
    loss: String,
    /// alpha,beta,gamma,delta[,n] given directly instead of data.
    #[arg(
        long,
        conflicts_with = "data",
        value_delimiter = ',',
        num_args = 1,
        allow_hyphen_values = true
    )]
    theoretical: Option<Vec<f64>>,
    /// Sample size for --theoretical.
    #[arg(long, conflicts_with = "data")]
    n: Option<usize>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["pi", "r"]))]
struct ResampleArgs {
    /// Correlation between two test-set errors, in (0, 1).
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    /// Target resampling effectiveness, in (0, 1).
    #[arg(long, allow_hyphen_values = true)]
    pi: Option<f64>,
    /// Target reduction ratio, positive.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
}

#[derive(Args)]
struct RegressionArgs {
    #[arg(long)]
    data: PathBuf,
    /// Response column; all other columns are covariates.
    #[arg(long)]
    response: String,
    /// Do not prepend an intercept column.
    #[arg(long)]
    no_intercept: bool,
    /// Also write the variance curve `(n1, var)` to this file.
    #[arg(long)]
    curve_csv: Option<PathBuf>,
}

#[derive(Args)]
struct LogisticArgs {
    #[arg(long)]
    data: PathBuf,
    /// 0/1 response column; all other columns are covariates.
    #[arg(long)]
    response: String,
    #[arg(long)]
    no_intercept: bool,
    /// Plug-in latent variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Use the inverse Fisher information instead of the Gram inverse.
    #[arg(long)]
    fisher: bool,
    /// Also write the curve `(n1, v)` to this file.
    #[arg(long)]
    curve_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Reproduce a table (T4..T8, T9, T11) at a reduced scale.
    #[arg(long, value_parser = TableId::from_str, conflicts_with_all = ["n", "n1", "reps", "loss", "regression"])]
    table: Option<TableId>,
    /// Fraction of the table's full-scale repetitions.
    #[arg(long, default_value_t = 0.05, requires = "table")]
    scale: f64,
    /// Override the table's sample sizes.
    #[arg(long, value_delimiter = ',', requires = "table")]
    sizes: Option<Vec<usize>>,
    /// Distribution, e.g. normal:0,1 or t:12 (repeat to filter a table).
    #[arg(long)]
    dist: Vec<String>,
    #[arg(long, value_parser = LOSSES)]
    loss: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Random splits per dataset.
    #[arg(long, default_value_t = 10)]
    splits: usize,
    /// Least squares on the fixed regression design, `--dist` being the error law.
    #[arg(long)]
    regression: bool,
    /// Write the CSV rows to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    n1: usize,
    /// Restrict to one moment tag.
    #[arg(long, value_parser = MomentTag::from_str)]
    tag: Option<MomentTag>,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn params_value(p: &MomentParams) -> Value {
    json!({
        "alpha": p.alpha,
        "beta": p.beta,
        "gamma": p.gamma,
        "delta": p.delta,
        "A": p.a(),
        "B": p.b(),
    })
}

/// Moment parameters and sample size from `--data` or `--theoretical`.
fn resolve_params(src: &MomentSource) -> Result<(MomentParams, Value), CliError> {
    let loss = LossSpec::parse(&src.loss)?;
    if let Some(t) = &src.theoretical {
        let n = match (t.len(), src.n) {
            (4, Some(n)) => n,
            (4, None) => {
                return Err(CliError::usage(
                    "--theoretical needs n as a fifth value or --n".into(),
                ))
            }
            (5, None) if t[4] >= 1.0 && t[4].fract() == 0.0 => t[4] as usize,
            (5, None) => {
                return Err(CliError::usage(format!(
                    "n must be a positive integer, got {}",
                    t[4]
                )))
            }
            (5, Some(_)) => return Err(CliError::usage("n given twice".into())),
            (k, _) => {
                return Err(CliError::usage(format!(
                    "--theoretical takes 4 or 5 values, got {k}"
                )))
            }
        };
        let p = MomentParams::theoretical(t[0], t[1], t[2], t[3], n)?;
        let src = json!({"source": "theoretical", "loss": src.loss, "n": n});
        return Ok((p, src));
    }
    let path = src.data.as_ref().expect("clap requires --data");
    let table = Table::read(path)?;
    let sample = table.column(src.column.as_deref())?;
    let n = sample.len();
    let p = estimate_moment_params(&loss.resolved(n), &sample)?;
    let cfg = json!({
        "source": "data",
        "data": path.display().to_string(),
        "column": src.column,
        "loss": src.loss,
        "n": n,
    });
    Ok((p, cfg))
}

fn j_table<F>(targets: &[f64], f: F) -> Value
where
    F: Fn(f64) -> cvplan::Result<cvplan::variance::ResamplingPlan>,
{
    let m: serde_json::Map<String, Value> = targets
        .iter()
        .map(|&t| (t.to_string(), f(t).map_or(Value::Null, |p| json!(p.j))))
        .collect();
    Value::Object(m)
}

fn plan_split(src: &MomentSource) -> Result<Output, CliError> {
    let (p, cfg) = resolve_params(src)?;
    let plan = optimal_n1(p.n, &p)?;
    let rho = plan.rho_opt;
    let mut table = Csv::new(&["n1", "v"]);
    for &(t, v) in &plan.curve {
        table.push(vec![t.to_string(), num(v)]);
    }
    let result = json!({
        "n": plan.n,
        "n1_opt": plan.n1_opt,
        "n2": plan.n2,
        "v": plan.v,
        "c": plan.c,
        "rho": rho,
        "method": to_value(&plan.method),
        "theorem_n1": plan.theorem_n1,
        "b_nonpositive": plan.b_nonpositive,
        "params": params_value(&p),
        "J_re": j_table(&RE_TARGETS, |pi| j_for_effectiveness(rho, pi)),
        "J_rr": j_table(&RR_TARGETS, |r| j_for_reduction(rho, r)),
        "curve": plan.curve,
    });
    Ok(Output {
        config: cfg,
        result,
        table: Some(table),
    })
}

fn plan_folds(src: &MomentSource) -> Result<Output, CliError> {
    let (p, cfg) = resolve_params(src)?;
    let plan = optimal_k(p.n, &p)?;
    let mut table = Csv::new(&["k", "variance", "relative_efficiency"]);
    for pt in &plan.curve {
        table.push(vec![
            pt.k.to_string(),
            num(pt.variance),
            num(pt.relative_efficiency),
        ]);
    }
    let result = json!({
        "n": plan.n,
        "k_opt": plan.k_opt,
        "params": params_value(&p),
        "curve": to_value(&plan.curve),
    });
    Ok(Output {
        config: cfg,
        result,
        table: Some(table),
    })
}

fn plan_resamples(a: &ResampleArgs) -> Result<Output, CliError> {
    let plan = match (a.pi, a.r) {
        (Some(pi), None) => j_for_effectiveness(a.rho, pi)?,
        (None, Some(r)) => j_for_reduction(a.rho, r)?,
        _ => unreachable!("clap enforces exactly one target"),
    };
    Ok(Output {
        config: json!({"rho": a.rho, "pi": a.pi, "r": a.r}),
        result: to_value(&plan),
        table: None,
    })
}

fn regression_plan(a: &RegressionArgs) -> Result<Output, CliError> {
    let data = Table::read(&a.data)?;
    let (x, y, names) = data.design(&a.response, !a.no_intercept)?;
    let stats = design_stats(&x, &y)?;
    let split = regression_optimal_split(&stats)?;
    let rows = regression_table(&stats, split.n1_opt)?;
    if let Some(path) = &a.curve_csv {
        let mut c = Csv::new(&["n1", "var"]);
        for &(t, v) in &split.variance_curve {
            c.push(vec![t.to_string(), num(v)]);
        }
        c.write_path(path)?;
    }
    let mut table = Csv::new(&[
        "label",
        "n1",
        "v",
        "c",
        "var_cv_1",
        "var_cv_10",
        "var_cv_15",
        "var_cv_inf",
    ]);
    for r in &rows {
        table.push(vec![
            r.label.clone(),
            r.n1.to_string(),
            num(r.v),
            num(r.c),
            num(r.var_cv_1),
            num(r.var_cv_10),
            num(r.var_cv_15),
            num(r.var_cv_inf),
        ]);
    }
    let result = json!({
        "n": stats.n,
        "p": stats.p,
        "covariates": names,
        "beta_hat": stats.beta_hat,
        "theta": stats.theta,
        "sigma2": stats.sigma2_hat,
        "mu4": stats.mu4_hat,
        "condition": stats.condition,
        "n1_opt": split.n1_opt,
        "n1_opt_nonnormal": split.n1_opt_nonnormal,
        "k_opt": split.k_opt,
        "matches_theory": split.matches_theory,
        "variance_curve": split.variance_curve,
        "kfold_curve": split.kfold_curve,
        "table": to_value(&rows),
    });
    Ok(Output {
        config: json!({
            "data": a.data.display().to_string(),
            "response": a.response,
            "intercept": !a.no_intercept,
            "curve_csv": a.curve_csv.as_ref().map(|p| p.display().to_string()),
        }),
        result,
        table: Some(table),
    })
}

fn logistic_plan(a: &LogisticArgs) -> Result<Output, CliError> {
    let data = Table::read(&a.data)?;
    let (x, y, names) = data.design(&a.response, !a.no_intercept)?;
    let opts = LogisticOptions {
        sigma2: a.sigma2,
        v_mode: if a.fisher { VMode::Fisher } else { VMode::Gram },
        parallel: true,
    };
    let (design, curve) = algorithm1_optimal_n1(&x, &y, &opts)?;
    let mut table = Csv::new(&["n1", "v"]);
    for e in &curve.entries {
        table.push(vec![e.n1.to_string(), num(e.v)]);
    }
    if let Some(path) = &a.curve_csv {
        table.write_path(path)?;
    }
    let points: Vec<(usize, f64)> = curve.entries.iter().map(|e| (e.n1, e.v)).collect();
    let result = json!({
        "n": design.n,
        "p": design.p,
        "covariates": names,
        "beta_hat": design.beta_hat,
        "sigma2": design.sigma2_hat,
        "n1_opt": curve.argmin_n1,
        "curve": points,
    });
    Ok(Output {
        config: json!({
            "data": a.data.display().to_string(),
            "response": a.response,
            "intercept": !a.no_intercept,
            "sigma2": a.sigma2,
            "v_mode": to_value(&opts.v_mode),
            "curve_csv": a.curve_csv.as_ref().map(|p| p.display().to_string()),
        }),
        result,
        table: Some(table),
    })
}

fn parse_dists(specs: &[String]) -> Result<Vec<DistSpec>, CliError> {
    specs
        .iter()
        .map(|s| DistSpec::parse(s).map_err(CliError::from))
        .collect()
}

fn simulate(a: &SimulateArgs, seed: u64) -> Result<Output, CliError> {
    let dists = parse_dists(&a.dist)?;
    if let Some(id) = a.table {
        let opts = TableOptions {
            sizes: a.sizes.clone(),
            dists: if dists.is_empty() {
                None
            } else {
                Some(dists.clone())
            },
            splits_per_rep: a.splits,
            parallel: true,
        };
        let report = simulate_table_with(id, a.scale, seed, &opts)?;
        let (header, records) = report.csv_records();
        let table = Csv { header, records };
        if let Some(path) = &a.out {
            table.write_path(path)?;
        }
        return Ok(Output {
            config: json!({
                "table": id.to_string(),
                "scale": a.scale,
                "reps": report.reps,
                "sizes": a.sizes,
                "dists": dists.iter().map(DistSpec::label).collect::<Vec<_>>(),
                "splits": a.splits,
                "seed": seed,
                "out": a.out.as_ref().map(|p| p.display().to_string()),
            }),
            result: to_value(&report),
            table: Some(table),
        });
    }
    let missing = |what: &str| {
        CliError::usage(format!(
            "free-form simulate needs --{what} (or use --table)"
        ))
    };
    let n = a.n.ok_or_else(|| missing("n"))?;
    let n1 = a.n1.ok_or_else(|| missing("n1"))?;
    let reps = a.reps.ok_or_else(|| missing("reps"))?;
    if n1 < n.div_ceil(2) || n1 >= n {
        return Err(CliError::usage(format!(
            "need n/2 <= n1 < n, got n1={n1}, n={n}"
        )));
    }
    let dist = match dists.as_slice() {
        [d] => *d,
        [] => return Err(missing("dist")),
        _ => {
            return Err(CliError::usage(
                "free-form simulate takes one --dist".into(),
            ))
        }
    };
    let exp = if a.regression {
        if a.loss.as_deref().is_some_and(|l| l != "squared") {
            return Err(CliError::usage(
                "regression experiments use squared loss".into(),
            ));
        }
        let design = regression_recipe(n, seed)?;
        Experiment::Regression {
            design: std::sync::Arc::new(design),
            error: dist,
        }
    } else {
        let loss = LossSpec::parse(a.loss.as_deref().unwrap_or("squared"))?.resolved(n);
        Experiment::SampleMean { dist, loss }
    };
    let report = empirical_cv_moments(&exp, n, n1, reps, a.splits, seed, true)?;
    let mut table = Csv::new(&["J", "var_cv_hat", "var_cv_theory"]);
    for (i, e) in report.var_cv.iter().enumerate() {
        let th = report
            .theory
            .as_ref()
            .and_then(|t| t.var_cv.get(i))
            .map(|t| t.value);
        table.push(vec![e.j.clone(), num(e.value), opt(th)]);
    }
    if let Some(path) = &a.out {
        table.write_path(path)?;
    }
    Ok(Output {
        config: json!({
            "model": if a.regression { "regression" } else { "sample_mean" },
            "loss": a.loss.as_deref().unwrap_or("squared"),
            "dist": dist.label(),
            "n": n,
            "n1": n1,
            "reps": reps,
            "splits": a.splits,
            "seed": seed,
            "out": a.out.as_ref().map(|p| p.display().to_string()),
        }),
        result: to_value(&report),
        table: Some(table),
    })
}

fn oracle(a: &OracleArgs) -> Result<(Output, bool), CliError> {
    let geom = SplitGeometry::new(a.n, a.n1)?;
    let tags: Vec<MomentTag> = match a.tag {
        Some(t) => vec![t],
        None => MomentTag::ALL.to_vec(),
    };
    let rows = oracle_check(geom, &tags)?;
    let all_pass = rows.iter().all(|r| r.pass);
    let mut table = Csv::new(&["tag", "closed_form", "enumerated", "value", "status"]);
    for r in &rows {
        table.push(vec![
            r.tag.clone(),
            r.closed_form.clone(),
            r.enumerated.clone(),
            num(r.value),
            if r.pass { "PASS" } else { "FAIL" }.into(),
        ]);
    }
    let out = Output {
        config: json!({
            "n": a.n,
            "n1": a.n1,
            "tag": a.tag.map(|t| t.to_string()),
        }),
        result: json!({"all_pass": all_pass, "rows": to_value(&rows)}),
        table: Some(table),
    };
    Ok((out, all_pass))
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let (mut out, ok) = match &cli.command {
        Command::PlanSplit(s) => (plan_split(s)?, true),
        Command::PlanFolds(s) => (plan_folds(s)?, true),
        Command::PlanResamples(a) => (plan_resamples(a)?, true),
        Command::RegressionPlan(a) => (regression_plan(a)?, true),
        Command::LogisticPlan(a) => (logistic_plan(a)?, true),
        Command::Simulate(a) => (simulate(a, seed)?, true),
        Command::OracleCheck(a) => oracle(a)?,
    };
    let name = match &cli.command {
        Command::PlanSplit(_) => "plan-split",
        Command::PlanFolds(_) => "plan-folds",
        Command::PlanResamples(_) => "plan-resamples",
        Command::RegressionPlan(_) => "regression-plan",
        Command::LogisticPlan(_) => "logistic-plan",
        Command::Simulate(_) => "simulate",
        Command::OracleCheck(_) => "oracle-check",
    };
    if let Value::Object(m) = &mut out.config {
        m.insert("command".into(), json!(name));
        m.insert(
            "format".into(),
            json!(format!("{:?}", cli.format).to_lowercase()),
        );
        m.insert("seed".into(), json!(seed));
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    }
    emit(&out, cli.format)?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        // a closed downstream pipe is not worth reporting
        Err(e) if e.msg.contains("Broken pipe") => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
