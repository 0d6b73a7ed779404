//! Seeded simulation engine for the empirical studies.
//!
//! Randomness comes from `ChaCha8Rng`. A run with seed `s` builds
//! `ChaCha8Rng::seed_from_u64(s)` and selects one stream per task with
//! `set_stream(rep << 20 | lane)`: lane 0 draws the dataset of repetition
//! `rep` and lane `1 + j` draws its split `j`. Covariates that are generated
//! once use stream `u64::MAX`. Tasks never share a stream, so serial and
//! parallel runs give bit-identical output.

mod dist;
mod recipes;
mod tables;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{self, LossSpec, MomentParams};
use crate::quadrature::integrate;
use crate::regression::{self, DesignShape};
use crate::split::{self, ceil_half};

pub use dist::DistSpec;
pub use recipes::{
    gram_convergence, logistic_covariates, logistic_replicates, logistic_response,
    regression_recipe, LogisticRep, LOGISTIC_BETA, REGRESSION_BETA,
};
pub use tables::{
    simulate_table, simulate_table_with, LogisticRow, RegressionRow, SampleMeanRow, TableId,
    TableOptions, TableReport, TableRows,
};

pub const COVARIATE_STREAM: u64 = u64::MAX;
const LANE_BITS: u32 = 20;
/// Split redraws allowed when a training design is singular.
const MAX_SPLIT_REDRAWS: usize = 100;

pub fn stream_rng(seed: u64, rep: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((rep << LANE_BITS) | lane);
    rng
}

/// SplitMix64 finalizer of `seed` and `tag`, used to give table rows
/// independent seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` draws from `dist`; deterministic in `(dist, n, seed)`.
pub fn sample(dist: &DistSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParams("sample size must be >= 1".into()));
    }
    dist.draw(&mut stream_rng(seed, 0, 0), n)
}

fn expectation(dist: &DistSpec, mu: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi) = dist.support();
    let g = |x: f64| {
        let d = dist.pdf(x).unwrap_or(0.0);
        if d == 0.0 {
            0.0
        } else {
            f(x) * d
        }
    };
    if mu > lo && mu < hi {
        integrate(&g, lo, mu, 1e-13) + integrate(&g, mu, hi, 1e-13)
    } else {
        integrate(&g, lo, hi, 1e-13)
    }
}

/// `E(X - μ)^k` by quadrature.
pub fn central_moment(dist: &DistSpec, k: i32) -> Result<f64> {
    let mu = dist
        .mean()
        .ok_or_else(|| Error::DomainError(format!("{} has no mean", dist.label())))?;
    let m = expectation(dist, mu, |x| (x - mu).powi(k));
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::DomainError(format!(
            "moment {k} of {} is not finite",
            dist.label()
        )))
    }
}

/// Population α, β, γ, δ of a loss under `dist`, evaluated at `μ = E X`.
pub fn population_params(loss: &LossSpec, dist: &DistSpec, n: usize) -> Result<MomentParams> {
    let (mu, s2) = match (dist.mean(), dist.variance()) {
        (Some(m), Some(v)) => (m, v),
        _ => {
            return Err(Error::DomainError(format!(
                "{} lacks a finite variance",
                dist.label()
            )))
        }
    };
    if !(s2 > 0.0) {
        return Err(Error::DegenerateSample(format!(
            "{} is a point mass",
            dist.label()
        )));
    }
    let ex = |f: &dyn Fn(f64) -> f64| expectation(dist, mu, f);
    let p = if let LossSpec::QClass(g) = loss {
        let q = |x: f64| g.derivs(x)[0];
        let eq = ex(&q);
        let var_q = ex(&|x| (q(x) - eq).powi(2));
        let cov = ex(&|x| (x - mu) * (q(x) - eq));
        loss::qclass_population_params(g, mu, s2, var_q, cov)?.with_n(n)
    } else {
        let spec = loss.resolved(n);
        let d = |x: f64, i: usize| loss::derivatives(&spec, mu, x).map_or(f64::NAN, |v| v[i]);
        let el = ex(&|x| d(x, 0));
        let e1 = ex(&|x| d(x, 1));
        let e2 = ex(&|x| d(x, 2));
        MomentParams {
            alpha: s2 * e1 * e1,
            beta: ex(&|x| (d(x, 0) - el).powi(2)),
            gamma: s2 * ex(&|x| (d(x, 1) - e1).powi(2)),
            delta: s2 * ex(&|x| (d(x, 0) - el) * (d(x, 2) - e2)),
            sigma2: Some(s2),
            mu: Some(mu),
            n,
        }
    };
    p.validate()?;
    Ok(p)
}

/// Fixed covariates and coefficients of a linear model.
#[derive(Debug, Clone)]
pub struct RegressionDesign {
    pub x: DMatrix<f64>,
    pub beta: Vec<f64>,
}

impl RegressionDesign {
    pub fn mean_response(&self) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.beta);
        (&self.x * b).iter().copied().collect()
    }
}

/// A data generator paired with a decision rule.
#[derive(Debug, Clone)]
pub enum Experiment {
    /// i.i.d. data, decision is the training mean.
    SampleMean { dist: DistSpec, loss: LossSpec },
    /// Least squares on fixed covariates, squared error on the test set.
    Regression {
        design: Arc<RegressionDesign>,
        error: DistSpec,
    },
}

impl Experiment {
    fn rule(&self) -> &'static str {
        match self {
            Experiment::SampleMean { .. } => "sample_mean",
            Experiment::Regression { .. } => "least_squares",
        }
    }

    fn loss_name(&self) -> String {
        match self {
            Experiment::SampleMean { loss, .. } => loss.name(),
            Experiment::Regression { .. } => "squared".into(),
        }
    }

    fn dist(&self) -> &DistSpec {
        match self {
            Experiment::SampleMean { dist, .. } => dist,
            Experiment::Regression { error, .. } => error,
        }
    }

    fn check(&self, n: usize, n1: usize) -> Result<()> {
        self.dist().validate()?;
        if n1 == 0 || n1 >= n {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= n1 < n, got n1={n1}, n={n}"
            )));
        }
        if let Experiment::Regression { design, .. } = self {
            let (rows, p) = design.x.shape();
            if rows != n || design.beta.len() != p {
                return Err(Error::InvalidConfig(format!(
                    "design is {rows}x{p} with {} coefficients, n={n}",
                    design.beta.len()
                )));
            }
            if n1 <= p {
                return Err(Error::InvalidConfig(format!("need n1 > p = {p}, got {n1}")));
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<f64>> {
        match self {
            Experiment::SampleMean { dist, .. } => dist.draw(rng, n),
            Experiment::Regression { design, error } => {
                let eps = error.draw(rng, n)?;
                Ok(design
                    .mean_response()
                    .into_iter()
                    .zip(eps)
                    .map(|(m, e)| m + e)
                    .collect())
            }
        }
    }

    /// Test-set average loss for one split; `Ok(None)` if the training
    /// design is singular.
    fn test_error(&self, loss: &LossSpec, y: &[f64], train: &[bool]) -> Result<Option<f64>> {
        match self {
            Experiment::SampleMean { .. } => {
                let (mut s, mut k) = (0.0, 0usize);
                for (v, &t) in y.iter().zip(train) {
                    if t {
                        s += v;
                        k += 1;
                    }
                }
                let mu = s / k as f64;
                let (mut e, mut m) = (0.0, 0usize);
                for (&v, &t) in y.iter().zip(train) {
                    if !t {
                        e += loss::loss_value(loss, mu, v)?;
                        m += 1;
                    }
                }
                Ok(Some(e / m as f64))
            }
            Experiment::Regression { design, .. } => {
                let p = design.x.ncols();
                let mut xtx = DMatrix::<f64>::zeros(p, p);
                let mut xty = DVector::<f64>::zeros(p);
                for (i, &t) in train.iter().enumerate() {
                    if t {
                        let row = design.x.row(i);
                        for a in 0..p {
                            xty[a] += row[a] * y[i];
                            for b in 0..p {
                                xtx[(a, b)] += row[a] * row[b];
                            }
                        }
                    }
                }
                let Some(chol) = xtx.cholesky() else {
                    return Ok(None);
                };
                let beta = chol.solve(&xty);
                if beta.iter().any(|b| !b.is_finite()) {
                    return Ok(None);
                }
                let (mut e, mut m) = (0.0, 0usize);
                for (i, &t) in train.iter().enumerate() {
                    if !t {
                        let fit = design.x.row(i).transpose().dot(&beta);
                        e += (y[i] - fit).powi(2);
                        m += 1;
                    }
                }
                Ok(Some(e / m as f64))
            }
        }
    }

    fn rep_errors(
        &self,
        n: usize,
        n1: usize,
        splits: usize,
        seed: u64,
        rep: u64,
    ) -> Result<Vec<f64>> {
        let y = self.draw(&mut stream_rng(seed, rep, 0), n)?;
        let loss = match self {
            Experiment::SampleMean { loss, .. } => loss.resolved(n),
            Experiment::Regression { .. } => LossSpec::Squared,
        };
        let mut train = vec![false; n];
        let mut out = Vec::with_capacity(splits);
        for j in 0..splits {
            let mut rng = stream_rng(seed, rep, 1 + j as u64);
            let mut err = None;
            for _ in 0..MAX_SPLIT_REDRAWS {
                train.iter_mut().for_each(|t| *t = false);
                for i in index::sample(&mut rng, n, n1) {
                    train[i] = true;
                }
                err = self.test_error(&loss, &y, &train)?;
                if err.is_some() {
                    break;
                }
            }
            out.push(err.ok_or(Error::SingularDesign(f64::INFINITY))?);
        }
        Ok(out)
    }
}

/// A value with its jackknife standard error over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
    pub reps: usize,
}

/// Unbiased estimates of `v`, `c` from per-repetition test errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvEstimates {
    pub mean_error: f64,
    pub v: Estimate,
    pub c: Estimate,
    pub v_minus_c: Estimate,
    /// `None` when `v̂ = 0`.
    pub rho: Option<Estimate>,
}

struct RepSummary {
    q: f64,
    p: f64,
    m: f64,
}

fn jackknife_se(full: f64, loo: &[f64]) -> Option<f64> {
    let r = loo.len() as f64;
    if loo.len() < 3 || loo.iter().any(|v| !v.is_finite()) || !full.is_finite() {
        return None;
    }
    let mean = loo.iter().sum::<f64>() / r;
    let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
    Some(((r - 1.0) / r * ss).sqrt())
}

/// Each row holds the test errors of one repetition; all rows must have
/// the same length `J >= 2`.
pub fn cv_moments_from_errors(errors: &[Vec<f64>]) -> Result<CvEstimates> {
    let reps = errors.len();
    if reps < 2 {
        return Err(Error::InvalidConfig(format!("need reps >= 2, got {reps}")));
    }
    let j = errors[0].len();
    if j < 2 || errors.iter().any(|e| e.len() != j) {
        return Err(Error::InvalidConfig(
            "need >= 2 splits per repetition, all equal".into(),
        ));
    }
    let total: f64 = errors.iter().flatten().sum();
    let grand = total / (reps * j) as f64;
    let jf = j as f64;
    let summaries: Vec<RepSummary> = errors
        .iter()
        .map(|row| {
            let (mut s, mut s2) = (0.0, 0.0);
            for &e in row {
                let d = e - grand;
                s += d;
                s2 += d * d;
            }
            RepSummary {
                q: s2 / jf,
                p: (s * s - s2) / (jf * (jf - 1.0)),
                m: s / jf,
            }
        })
        .collect();
    let rf = reps as f64;
    let sq: f64 = summaries.iter().map(|s| s.q).sum();
    let sp: f64 = summaries.iter().map(|s| s.p).sum();
    let sm: f64 = summaries.iter().map(|s| s.m).sum();
    let sm2: f64 = summaries.iter().map(|s| s.m * s.m).sum();
    let cross = (sm * sm - sm2) / (rf * (rf - 1.0));
    let v = sq / rf - cross;
    let c = sp / rf - cross;
    let ratio = |v: f64, c: f64| if v > 0.0 { c / v } else { f64::NAN };

    let (mut lv, mut lc, mut ld, mut lr) = (vec![], vec![], vec![], vec![]);
    if reps >= 3 {
        let r1 = rf - 1.0;
        for s in &summaries {
            let m = sm - s.m;
            let cr = (m * m - (sm2 - s.m * s.m)) / (r1 * (r1 - 1.0));
            let vv = (sq - s.q) / r1 - cr;
            let cc = (sp - s.p) / r1 - cr;
            lv.push(vv);
            lc.push(cc);
            ld.push(vv - cc);
            lr.push(ratio(vv, cc));
        }
    }
    let est = |value: f64, loo: &[f64]| Estimate {
        value,
        se: jackknife_se(value, loo),
        reps,
    };
    let rho = ratio(v, c);
    Ok(CvEstimates {
        mean_error: grand,
        v: est(v, &lv),
        c: est(c, &lc),
        v_minus_c: est(v - c, &ld),
        rho: rho.is_finite().then(|| est(rho, &lr)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarCvEntry {
    /// `"1"`, `"10"`, `"15"` or `"inf"`.
    pub j: String,
    pub value: f64,
}

pub const REPORTED_J: [Option<usize>; 4] = [Some(1), Some(10), Some(15), None];

/// `(v - c)/J + c` at the reported J values; no validation of `v >= c`.
pub fn var_cv_entries(v: f64, c: f64) -> Vec<VarCvEntry> {
    REPORTED_J
        .iter()
        .map(|j| match j {
            Some(j) => VarCvEntry {
                j: j.to_string(),
                value: (v - c) / *j as f64 + c,
            },
            None => VarCvEntry {
                j: "inf".into(),
                value: c,
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub rule: String,
    pub loss: String,
    pub dist: String,
    pub n: usize,
    pub n1: usize,
    pub reps: usize,
    pub splits_per_rep: usize,
    pub seed: u64,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theory {
    pub v: f64,
    pub c: f64,
    pub rho: f64,
    pub var_cv: Vec<VarCvEntry>,
    pub note: String,
}

/// Average of a per-repetition plug-in value, with MSE against theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub mean: f64,
    pub theory: Option<f64>,
    /// Mean squared deviation from `theory`.
    pub mse: Option<f64>,
    pub reps: usize,
}

impl RatioEstimate {
    fn from_values(values: &[f64], theory: Option<f64>) -> Self {
        let k = values.len();
        let mean = if k == 0 {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / k as f64
        };
        RatioEstimate {
            mean,
            theory,
            mse: theory
                .filter(|_| k > 0)
                .map(|t| values.iter().map(|v| (v - t).powi(2)).sum::<f64>() / k as f64),
            reps: k,
        }
    }
}

/// Plug-in `n1_opt/n`, `ρ_opt` and `k_opt/n` averaged over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlugInSummary {
    pub n1_ratio: RatioEstimate,
    pub rho_opt: RatioEstimate,
    pub k_ratio: RatioEstimate,
    pub failed_reps: usize,
}

fn plug_in_ratios(n: usize, params: &MomentParams) -> Result<(f64, f64, f64)> {
    let plan = split::optimal_n1(n, params)?;
    let folds = split::optimal_k(n, params)?;
    let nf = n as f64;
    Ok((
        plan.n1_opt as f64 / nf,
        plan.rho_opt,
        folds.k_opt as f64 / nf,
    ))
}

/// Theoretical plug-in ratios from population parameters.
pub fn theoretical_ratios(loss: &LossSpec, dist: &DistSpec, n: usize) -> Result<(f64, f64, f64)> {
    let p = population_params(loss, dist, n)?;
    plug_in_ratios(n, &p)
}

/// Per repetition: draw `n` values, estimate α̂..δ̂, and plan the split.
pub fn plug_in_summary(
    loss: &LossSpec,
    dist: &DistSpec,
    n: usize,
    reps: usize,
    seed: u64,
    parallel: bool,
) -> Result<PlugInSummary> {
    if n < 4 {
        return Err(Error::InvalidConfig(format!("need n >= 4, got {n}")));
    }
    dist.validate()?;
    let one = |r: usize| -> Result<Option<(f64, f64, f64)>> {
        let data = dist.draw(&mut stream_rng(seed, r as u64, 0), n)?;
        Ok(loss::estimate_moment_params(loss, &data)
            .and_then(|p| plug_in_ratios(n, &p))
            .ok())
    };
    let per_rep: Vec<Option<(f64, f64, f64)>> = if parallel {
        (0..reps).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..reps).map(one).collect::<Result<_>>()?
    };
    let ok: Vec<(f64, f64, f64)> = per_rep.iter().flatten().copied().collect();
    let theory = theoretical_ratios(loss, dist, n).ok();
    let col = |f: fn(&(f64, f64, f64)) -> f64| ok.iter().map(f).collect::<Vec<_>>();
    Ok(PlugInSummary {
        n1_ratio: RatioEstimate::from_values(&col(|t| t.0), theory.map(|t| t.0)),
        rho_opt: RatioEstimate::from_values(&col(|t| t.1), theory.map(|t| t.1)),
        k_ratio: RatioEstimate::from_values(&col(|t| t.2), theory.map(|t| t.2)),
        failed_reps: reps - ok.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub mean_error: f64,
    pub v_hat: Estimate,
    pub c_hat: Estimate,
    pub v_minus_c: Estimate,
    pub rho_hat: Option<Estimate>,
    /// Set when `ρ̂ < 0`, which can only happen by noise.
    pub rho_negative: bool,
    pub var_cv: Vec<VarCvEntry>,
    pub plug_in: Option<PlugInSummary>,
    pub theory: Option<Theory>,
    pub warnings: Vec<String>,
}

fn sample_mean_theory(loss: &LossSpec, dist: &DistSpec, n: usize, n1: usize) -> Option<Theory> {
    let p = population_params(loss, dist, n).ok()?;
    let v = split::approx_v_any(n, n1, &p);
    let nf = n as f64;
    let c = (p.alpha + p.beta) / nf + p.gamma / (nf * nf) + p.delta / (n1 as f64 * nf);
    Some(Theory {
        v,
        c,
        rho: c / v,
        var_cv: var_cv_entries(v, c),
        note: "second-order approximation".into(),
    })
}

/// `θ`, `σ²`, `μ₄` of a fixed design with the given error law.
pub fn design_shape(design: &RegressionDesign, error: &DistSpec) -> Result<DesignShape> {
    let n = design.x.nrows();
    let stats = regression::design_stats(&design.x, &vec![0.0; n])?;
    let sigma2 = error
        .variance()
        .ok_or_else(|| Error::DomainError(format!("{} lacks a variance", error.label())))?;
    let mu4 = match error {
        DistSpec::Normal { .. } => 3.0 * sigma2 * sigma2,
        _ => central_moment(error, 4)?,
    };
    Ok(DesignShape {
        n,
        p: stats.p,
        theta: stats.theta,
        sigma2,
        mu4,
    })
}

fn regression_theory(design: &RegressionDesign, error: &DistSpec, n1: usize) -> Option<Theory> {
    let shape = design_shape(design, error).ok()?;
    if n1 < ceil_half(shape.n) {
        return None;
    }
    let normal = regression::random_cv_moments_normal(&shape, n1).ok()?;
    let (v, note) = if matches!(error, DistSpec::Normal { .. }) {
        (normal.variance, "full closed form, normal errors")
    } else {
        (
            regression::random_cv_var_nonnormal(&shape, n1).ok()?,
            "leading-order variance for non-normal errors; covariance from the normal form",
        )
    };
    let c = normal.covariance;
    Some(Theory {
        v,
        c,
        rho: c / v,
        var_cv: var_cv_entries(v, c),
        note: note.into(),
    })
}

/// Empirical `v̂`, `ĉ`, `ρ̂` from `reps` datasets with `splits_per_rep`
/// random splits each.
pub fn empirical_cv_moments(
    exp: &Experiment,
    n: usize,
    n1: usize,
    reps: usize,
    splits_per_rep: usize,
    seed: u64,
    parallel: bool,
) -> Result<SimReport> {
    if reps < 2 || splits_per_rep < 2 {
        return Err(Error::InvalidConfig(format!(
            "need reps >= 2 and splits_per_rep >= 2, got {reps} and {splits_per_rep}"
        )));
    }
    exp.check(n, n1)?;
    let one = |r: usize| exp.rep_errors(n, n1, splits_per_rep, seed, r as u64);
    let errors: Vec<Vec<f64>> = if parallel {
        (0..reps).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..reps).map(one).collect::<Result<_>>()?
    };
    let est = cv_moments_from_errors(&errors)?;
    let mut warnings = Vec::new();
    let (plug_in, theory) = match exp {
        Experiment::SampleMean { dist, loss } => {
            warnings.extend(dist.moment_warning(loss.moments_required()));
            let plug = if n >= 4 {
                Some(plug_in_summary(loss, dist, n, reps, seed, parallel)?)
            } else {
                None
            };
            (plug, sample_mean_theory(loss, dist, n, n1))
        }
        Experiment::Regression { design, error } => {
            warnings.extend(error.moment_warning(6));
            (None, regression_theory(design, error, n1))
        }
    };
    let rho_negative = est.rho.is_some_and(|r| r.value < 0.0);
    if rho_negative {
        warnings.push("estimated correlation is negative".into());
    }
    Ok(SimReport {
        config: SimConfig {
            rule: exp.rule().into(),
            loss: exp.loss_name(),
            dist: exp.dist().label(),
            n,
            n1,
            reps,
            splits_per_rep,
            seed,
            rng: "ChaCha8".into(),
        },
        mean_error: est.mean_error,
        var_cv: var_cv_entries(est.v.value, est.c.value),
        v_hat: est.v,
        c_hat: est.c,
        v_minus_c: est.v_minus_c,
        rho_hat: est.rho,
        rho_negative,
        plug_in,
        theory,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n1: usize,
    pub v_hat: f64,
    pub se: Option<f64>,
    pub v_theory: Option<f64>,
}

/// Empirical and theoretical `v(n1)` over a grid of training sizes.
pub fn empirical_v_curve(
    exp: &Experiment,
    n: usize,
    n1_grid: &[usize],
    reps: usize,
    splits_per_rep: usize,
    seed: u64,
    parallel: bool,
) -> Result<Vec<CurvePoint>> {
    n1_grid
        .iter()
        .map(|&n1| {
            let r = empirical_cv_moments(exp, n, n1, reps, splits_per_rep, seed, parallel)?;
            Ok(CurvePoint {
                n1,
                v_hat: r.v_hat.value,
                se: r.v_hat.se,
                v_theory: r.theory.map(|t| t.v),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const N01: DistSpec = DistSpec::Normal {
        mu: 0.0,
        sigma: 1.0,
    };

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a = sample(&N01, 5, 7).unwrap();
        assert_eq!(a, sample(&N01, 5, 7).unwrap());
        assert_ne!(a, sample(&N01, 5, 8).unwrap());
        let mut r0 = stream_rng(7, 0, 1);
        let mut r1 = stream_rng(7, 1, 1);
        assert_ne!(N01.draw(&mut r0, 3).unwrap(), N01.draw(&mut r1, 3).unwrap());
    }

    #[test]
    fn sample_moments() {
        let n = 100_000;
        let x = sample(&N01, n, 1).unwrap();
        assert!(crate::stats::mean(&x).abs() < 4.0 / (n as f64).sqrt());
        let x = sample(&DistSpec::Pareto { a: 15.0 }, n, 2).unwrap();
        let se = (DistSpec::Pareto { a: 15.0 }.variance().unwrap() / n as f64).sqrt();
        assert!((crate::stats::mean(&x) - 15.0 / 14.0).abs() < 3.0 * se);
        assert!(x.iter().all(|&v| v >= 1.0));
        let x = sample(&DistSpec::Uniform { a: -1.0, b: 1.0 }, n, 3).unwrap();
        // Var of the sample variance is (μ₄ - σ⁴)/n with μ₄ = 1/5.
        let se = ((0.2 - 1.0 / 9.0) / n as f64).sqrt();
        assert!((crate::stats::var(&x) - 1.0 / 3.0).abs() < 3.0 * se);
        assert!(sample(&N01, 0, 1).is_err());
    }

    #[test]
    fn squared_population_params() {
        let p = population_params(&LossSpec::Squared, &N01, 100).unwrap();
        assert!(p.alpha.abs() < 1e-12 && p.delta.abs() < 1e-12);
        assert!((p.beta - 2.0).abs() < 1e-9);
        assert!((p.gamma - 4.0).abs() < 1e-9);
        let e = DistSpec::Exponential { lambda: 1.0 };
        let p = population_params(&LossSpec::Squared, &e, 100).unwrap();
        // Var (X-1)² = μ₄ - σ⁴ = 9 - 1
        assert!((p.beta - 8.0).abs() < 1e-8);
    }

    #[test]
    fn qclass_population_matches_generic_for_neg_square() {
        let g = LossSpec::QClass(crate::loss::QGenerator::NegSquare);
        let d = DistSpec::StudentT {
            nu: 12.0,
            shift: 5.0,
        };
        let a = population_params(&g, &d, 50).unwrap();
        let b = population_params(&LossSpec::Squared, &d, 50).unwrap();
        for (x, y) in [
            (a.alpha, b.alpha),
            (a.beta, b.beta),
            (a.gamma, b.gamma),
            (a.delta, b.delta),
        ] {
            assert!((x - y).abs() < 1e-7 * (1.0 + y.abs()), "{x} {y}");
        }
    }

    #[test]
    fn moment_estimator_on_known_errors() {
        // Two reps, errors independent of the rep: c is 0 in expectation.
        let e = vec![vec![1.0, 3.0], vec![2.0, 2.0]];
        let est = cv_moments_from_errors(&e).unwrap();
        // centered rows (-1, 1), (0, 0): Q = 1/2, P = -1/2, cross term 0
        assert!((est.v.value - 0.5).abs() < 1e-15);
        assert!((est.c.value + 0.5).abs() < 1e-15);
        assert!(est.v.se.is_none());
        assert!(cv_moments_from_errors(&e[..1]).is_err());
        assert!(cv_moments_from_errors(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn constant_data_gives_zero_moments() {
        let exp = Experiment::SampleMean {
            dist: DistSpec::Uniform { a: 2.0, b: 2.0 },
            loss: LossSpec::Squared,
        };
        let r = empirical_cv_moments(&exp, 20, 10, 10, 3, 1, false).unwrap();
        assert_eq!(r.v_hat.value, 0.0);
        assert_eq!(r.c_hat.value, 0.0);
        assert!(r.rho_hat.is_none());
        assert!(r.theory.is_none());
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let exp = Experiment::SampleMean {
            dist: DistSpec::Exponential { lambda: 1.0 },
            loss: LossSpec::Squared,
        };
        let a = empirical_cv_moments(&exp, 40, 20, 30, 4, 9, false).unwrap();
        let b = empirical_cv_moments(&exp, 40, 20, 30, 4, 9, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let exp = Experiment::SampleMean {
            dist: N01,
            loss: LossSpec::Squared,
        };
        assert!(matches!(
            empirical_cv_moments(&exp, 20, 10, 1, 3, 1, false),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            empirical_cv_moments(&exp, 20, 10, 5, 1, 1, false),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            empirical_cv_moments(&exp, 20, 20, 5, 2, 1, false),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
