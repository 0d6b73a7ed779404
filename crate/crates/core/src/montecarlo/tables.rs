//! Desk-scale regeneration of the simulation tables.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    design_shape, empirical_cv_moments, logistic_replicates, plug_in_summary, regression_recipe,
    stream_rng, DistSpec, Experiment, PlugInSummary, RegressionDesign,
};
use crate::error::{Error, Result};
use crate::loss::{LossSpec, QGenerator};
use crate::regression::{self, table_n1_grid};
use crate::split::ceil_half;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TableId {
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T11,
}

impl TableId {
    pub const ALL: [TableId; 7] = [
        TableId::T4,
        TableId::T5,
        TableId::T6,
        TableId::T7,
        TableId::T8,
        TableId::T9,
        TableId::T11,
    ];

    pub fn base_reps(&self) -> usize {
        match self {
            TableId::T9 => 5000,
            TableId::T11 => 50,
            _ => 10_000,
        }
    }

    pub fn default_sizes(&self) -> Vec<usize> {
        match self {
            TableId::T9 => vec![40, 60, 100, 200],
            TableId::T11 => vec![60, 100],
            _ => vec![60, 100, 301, 750, 1501, 5000],
        }
    }

    /// Loss of a sample-mean table.
    pub fn loss(&self) -> Option<LossSpec> {
        Some(match self {
            TableId::T4 => LossSpec::Squared,
            TableId::T5 => LossSpec::QClass(QGenerator::SqrtOnePlusSquare),
            TableId::T6 => LossSpec::ModifiedSquared,
            TableId::T7 => LossSpec::DoubleSquared,
            TableId::T8 => LossSpec::ApproxAbsolute { d: None },
            _ => return None,
        })
    }

    /// Data laws of a sample-mean table, or error laws otherwise.
    pub fn distributions(&self) -> Vec<DistSpec> {
        use DistSpec::*;
        let ln = LogNormal {
            mu: 0.0,
            sigma: 1.0,
        };
        let e1 = Exponential { lambda: 1.0 };
        let t = |nu: f64, shift: f64| StudentT { nu, shift };
        match self {
            TableId::T4 | TableId::T5 | TableId::T8 => vec![
                Normal {
                    mu: 0.0,
                    sigma: 1.0,
                },
                Uniform { a: -1.0, b: 1.0 },
                t(12.0, 0.0),
                t(6.0, 0.0),
                e1,
                ln,
                Pareto { a: 15.0 },
                Pareto { a: 6.0 },
            ],
            TableId::T6 => vec![
                Normal {
                    mu: 1.0,
                    sigma: 1.0,
                },
                Uniform { a: 0.0, b: 1.0 },
                t(12.0, 5.0),
                t(6.0, 5.0),
                e1,
                ln,
                Pareto { a: 15.0 },
                Pareto { a: 6.0 },
            ],
            TableId::T7 => vec![
                Normal {
                    mu: 0.0,
                    sigma: 1.0,
                },
                Uniform { a: -1.0, b: 1.0 },
                t(12.0, 0.0),
                t(9.0, 0.0),
                e1,
                ln,
                Pareto { a: 15.0 },
                Pareto { a: 9.0 },
            ],
            TableId::T9 => vec![Normal {
                mu: 0.0,
                sigma: 1.0,
            }],
            TableId::T11 => vec![
                Normal {
                    mu: 0.0,
                    sigma: 1.0,
                },
                Uniform { a: -1.0, b: 1.0 },
                t(12.0, 0.0),
            ],
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidConfig(format!("unknown table '{s}' (T4|T5|T6|T7|T8|T9|T11)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableOptions {
    /// Overrides the table's sample sizes.
    pub sizes: Option<Vec<usize>>,
    /// Restricts the table to these distributions.
    pub dists: Option<Vec<DistSpec>>,
    /// Random splits per dataset in the regression table.
    pub splits_per_rep: usize,
    pub parallel: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            sizes: None,
            dists: None,
            splits_per_rep: 10,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMeanRow {
    pub dist: String,
    pub n: usize,
    pub reps: usize,
    #[serde(flatten)]
    pub summary: PlugInSummary,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionRow {
    pub n: usize,
    pub n1_opt_hat: f64,
    pub n1_opt_mse: f64,
    pub label: String,
    pub n1: usize,
    pub reps: usize,
    pub v_hat: f64,
    pub v_se: Option<f64>,
    pub c_hat: f64,
    pub var_cv_10: f64,
    pub var_cv_15: f64,
    pub var_cv_inf: f64,
    pub v_theory: Option<f64>,
    pub c_theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticRow {
    pub error: String,
    pub n: usize,
    pub reps: usize,
    pub failed_reps: usize,
    pub n1_opt_mean: f64,
    pub n1_opt_var: f64,
    /// Mean `v` at the argmin and at `.75n .. .90n`.
    pub v_mean: Vec<(String, f64)>,
    pub argmin_at_half: usize,
    pub increasing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TableRows {
    SampleMean(Vec<SampleMeanRow>),
    Regression(Vec<RegressionRow>),
    Logistic(Vec<LogisticRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub table: TableId,
    pub scale: f64,
    pub reps: usize,
    pub seed: u64,
    pub rows: TableRows,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl TableReport {
    /// Header and records for CSV emission.
    pub fn csv_records(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let h = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match &self.rows {
            TableRows::SampleMean(rows) => (
                h(&[
                    "dist",
                    "n",
                    "reps",
                    "failed_reps",
                    "n1_ratio_hat",
                    "n1_ratio_theory",
                    "n1_ratio_mse",
                    "rho_opt_hat",
                    "rho_opt_theory",
                    "rho_opt_mse",
                    "k_ratio_hat",
                    "k_ratio_theory",
                    "k_ratio_mse",
                    "warning",
                ]),
                rows.iter()
                    .map(|r| {
                        let s = &r.summary;
                        vec![
                            r.dist.clone(),
                            r.n.to_string(),
                            r.reps.to_string(),
                            s.failed_reps.to_string(),
                            s.n1_ratio.mean.to_string(),
                            fmt_opt(s.n1_ratio.theory),
                            fmt_opt(s.n1_ratio.mse),
                            s.rho_opt.mean.to_string(),
                            fmt_opt(s.rho_opt.theory),
                            fmt_opt(s.rho_opt.mse),
                            s.k_ratio.mean.to_string(),
                            fmt_opt(s.k_ratio.theory),
                            fmt_opt(s.k_ratio.mse),
                            r.warning.clone().unwrap_or_default(),
                        ]
                    })
                    .collect(),
            ),
            TableRows::Regression(rows) => (
                h(&[
                    "n",
                    "n1_opt_hat",
                    "n1_opt_mse",
                    "label",
                    "n1",
                    "reps",
                    "v_hat",
                    "v_se",
                    "c_hat",
                    "var_cv_10",
                    "var_cv_15",
                    "var_cv_inf",
                    "v_theory",
                    "c_theory",
                ]),
                rows.iter()
                    .map(|r| {
                        vec![
                            r.n.to_string(),
                            r.n1_opt_hat.to_string(),
                            r.n1_opt_mse.to_string(),
                            r.label.clone(),
                            r.n1.to_string(),
                            r.reps.to_string(),
                            r.v_hat.to_string(),
                            fmt_opt(r.v_se),
                            r.c_hat.to_string(),
                            r.var_cv_10.to_string(),
                            r.var_cv_15.to_string(),
                            r.var_cv_inf.to_string(),
                            fmt_opt(r.v_theory),
                            fmt_opt(r.c_theory),
                        ]
                    })
                    .collect(),
            ),
            TableRows::Logistic(rows) => {
                let labels: Vec<String> = rows
                    .first()
                    .map(|r| r.v_mean.iter().map(|(l, _)| format!("v_{l}")).collect())
                    .unwrap_or_default();
                let mut header = h(&[
                    "error",
                    "n",
                    "reps",
                    "failed_reps",
                    "n1_opt_mean",
                    "n1_opt_var",
                ]);
                header.extend(labels);
                header.extend(h(&["argmin_at_half", "increasing"]));
                let recs = rows
                    .iter()
                    .map(|r| {
                        let mut rec = vec![
                            r.error.clone(),
                            r.n.to_string(),
                            r.reps.to_string(),
                            r.failed_reps.to_string(),
                            r.n1_opt_mean.to_string(),
                            r.n1_opt_var.to_string(),
                        ];
                        rec.extend(r.v_mean.iter().map(|(_, v)| v.to_string()));
                        rec.push(r.argmin_at_half.to_string());
                        rec.push(r.increasing.to_string());
                        rec
                    })
                    .collect();
                (header, recs)
            }
        }
    }
}

fn row_tag(dist_index: usize, n: usize) -> u64 {
    ((dist_index as u64) << 32) | n as u64
}

/// Repetitions at `scale` of the table's full-scale count.
pub fn scaled_reps(id: TableId, scale: f64) -> Result<usize> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "scale must lie in (0, 1], got {scale}"
        )));
    }
    let reps = (scale * id.base_reps() as f64).round() as usize;
    if reps < 50 {
        return Err(Error::InvalidConfig(format!(
            "scale {scale} gives {reps} repetitions for {id}; at least 50 are needed"
        )));
    }
    Ok(reps)
}

pub fn simulate_table(id: TableId, scale: f64, seed: u64) -> Result<TableReport> {
    simulate_table_with(id, scale, seed, &TableOptions::default())
}

pub fn simulate_table_with(
    id: TableId,
    scale: f64,
    seed: u64,
    opts: &TableOptions,
) -> Result<TableReport> {
    let reps = scaled_reps(id, scale)?;
    let sizes = opts.sizes.clone().unwrap_or_else(|| id.default_sizes());
    let all = id.distributions();
    let dists: Vec<(usize, DistSpec)> = match &opts.dists {
        Some(sel) => all
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, d)| sel.contains(d))
            .collect(),
        None => all.iter().copied().enumerate().collect(),
    };
    if dists.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no distribution of {id} selected"
        )));
    }
    let rows = match id {
        TableId::T9 => TableRows::Regression(regression_rows(&sizes, reps, seed, opts)?),
        TableId::T11 => TableRows::Logistic(logistic_rows(&dists, &sizes, reps, seed, opts)?),
        _ => {
            let loss = id.loss().expect("sample-mean table");
            let mut rows = Vec::new();
            for &(di, dist) in &dists {
                for &n in &sizes {
                    let s = super::derive_seed(seed, row_tag(di, n));
                    rows.push(SampleMeanRow {
                        dist: dist.label(),
                        n,
                        reps,
                        summary: plug_in_summary(&loss, &dist, n, reps, s, opts.parallel)?,
                        warning: dist.moment_warning(loss.moments_required()),
                    });
                }
            }
            TableRows::SampleMean(rows)
        }
    };
    Ok(TableReport {
        table: id,
        scale,
        reps,
        seed,
        rows,
    })
}

/// Per-repetition plug-in `n1_opt` from a fitted regression.
fn regression_plug_in(
    design: &RegressionDesign,
    error: &DistSpec,
    reps: usize,
    seed: u64,
    parallel: bool,
) -> Result<(f64, f64)> {
    let n = design.x.nrows();
    let target = ceil_half(n) as f64;
    let mean_y = design.mean_response();
    let one = |r: usize| -> Result<f64> {
        let eps = error.draw(&mut stream_rng(seed, r as u64, 0), n)?;
        let y: Vec<f64> = mean_y.iter().zip(&eps).map(|(m, e)| m + e).collect();
        let stats = regression::design_stats(&design.x, &y)?;
        Ok(regression::regression_optimal_split(&stats)?.n1_opt as f64)
    };
    let vals: Vec<f64> = if parallel {
        (0..reps).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..reps).map(one).collect::<Result<_>>()?
    };
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let mse = vals.iter().map(|v| (v - target).powi(2)).sum::<f64>() / k;
    Ok((mean, mse))
}

fn regression_rows(
    sizes: &[usize],
    reps: usize,
    seed: u64,
    opts: &TableOptions,
) -> Result<Vec<RegressionRow>> {
    let error = DistSpec::Normal {
        mu: 0.0,
        sigma: 1.0,
    };
    let mut rows = Vec::new();
    for &n in sizes {
        let s = super::derive_seed(seed, row_tag(0, n));
        let design = Arc::new(regression_recipe(n, s)?);
        let shape = design_shape(&design, &error)?;
        let n1_opt = regression::regression_optimal_split(&shape)?.n1_opt;
        let (n1_hat, n1_mse) = regression_plug_in(&design, &error, reps, s, opts.parallel)?;
        let exp = Experiment::Regression {
            design: design.clone(),
            error,
        };
        for (label, n1) in table_n1_grid(n, n1_opt) {
            let r = empirical_cv_moments(&exp, n, n1, reps, opts.splits_per_rep, s, opts.parallel)?;
            let cv = |j: &str| {
                r.var_cv
                    .iter()
                    .find(|e| e.j == j)
                    .map_or(f64::NAN, |e| e.value)
            };
            rows.push(RegressionRow {
                n,
                n1_opt_hat: n1_hat,
                n1_opt_mse: n1_mse,
                label,
                n1,
                reps,
                v_hat: r.v_hat.value,
                v_se: r.v_hat.se,
                c_hat: r.c_hat.value,
                var_cv_10: cv("10"),
                var_cv_15: cv("15"),
                var_cv_inf: cv("inf"),
                v_theory: r.theory.as_ref().map(|t| t.v),
                c_theory: r.theory.as_ref().map(|t| t.c),
            });
        }
    }
    Ok(rows)
}

fn logistic_rows(
    dists: &[(usize, DistSpec)],
    sizes: &[usize],
    reps: usize,
    seed: u64,
    opts: &TableOptions,
) -> Result<Vec<LogisticRow>> {
    let mut rows = Vec::new();
    for &(di, error) in dists {
        for &n in sizes {
            let s = super::derive_seed(seed, row_tag(di, n));
            let results = logistic_replicates(n, &error, reps, s, opts.parallel)?;
            let ok: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
            let k = ok.len();
            let kf = k as f64;
            let n1s: Vec<f64> = ok.iter().map(|r| r.argmin_n1 as f64).collect();
            let n1_mean = n1s.iter().sum::<f64>() / kf;
            let n1_var = if k > 1 {
                n1s.iter().map(|v| (v - n1_mean).powi(2)).sum::<f64>() / (kf - 1.0)
            } else {
                f64::NAN
            };
            let v_mean = match ok.first() {
                Some(first) => (0..first.v_at.len())
                    .map(|i| {
                        let m = ok.iter().map(|r| r.v_at[i].2).sum::<f64>() / kf;
                        (first.v_at[i].0.clone(), m)
                    })
                    .collect(),
                None => Vec::new(),
            };
            rows.push(LogisticRow {
                error: error.label(),
                n,
                reps,
                failed_reps: reps - k,
                n1_opt_mean: n1_mean,
                n1_opt_var: n1_var,
                v_mean,
                argmin_at_half: ok.iter().filter(|r| r.argmin_n1 == ceil_half(n)).count(),
                increasing: ok.iter().filter(|r| r.increasing).count(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse() {
        assert_eq!("t11".parse::<TableId>().unwrap(), TableId::T11);
        assert!("T10".parse::<TableId>().is_err());
    }

    #[test]
    fn scale_guard() {
        assert_eq!(scaled_reps(TableId::T4, 0.05).unwrap(), 500);
        assert!(scaled_reps(TableId::T11, 0.5).is_err());
        assert!(scaled_reps(TableId::T4, 0.0).is_err());
        assert!(scaled_reps(TableId::T4, 1.5).is_err());
        assert!(scaled_reps(TableId::T4, 0.004).is_err());
    }

    #[test]
    fn small_sample_mean_table() {
        let opts = TableOptions {
            sizes: Some(vec![60]),
            dists: Some(vec![DistSpec::Normal {
                mu: 0.0,
                sigma: 1.0,
            }]),
            ..TableOptions::default()
        };
        let r = simulate_table_with(TableId::T4, 0.005, 1, &opts).unwrap();
        let TableRows::SampleMean(rows) = &r.rows else {
            panic!()
        };
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].summary.n1_ratio.mean, 0.5);
        assert_eq!(rows[0].summary.k_ratio.mean, 1.0);
        let (h, recs) = r.csv_records();
        assert_eq!(h.len(), recs[0].len());
    }
}
