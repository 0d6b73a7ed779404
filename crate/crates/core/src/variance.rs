//! Variance of the random-CV estimator as a function of the resampling size J.

use serde::Serialize;

use crate::error::{Error, Result};

/// Slack used when re-checking a J criterion at its boundary.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvVarianceModel {
    pub v: f64,
    pub c: f64,
}

impl CvVarianceModel {
    pub fn new(v: f64, c: f64) -> Result<Self> {
        if !(v > 0.0) || !(c >= 0.0) || c > v || !v.is_finite() {
            return Err(Error::InvalidParams(format!(
                "need 0 <= c <= v and v > 0, got v={v}, c={c}"
            )));
        }
        Ok(CvVarianceModel { v, c })
    }

    pub fn rho(&self) -> f64 {
        self.c / self.v
    }
}

/// `(v - c)/J + c`.
pub fn var_cv(model: CvVarianceModel, j: usize) -> f64 {
    let j = j.max(1) as f64;
    (model.v - model.c) / j + model.c
}

/// Variance in the limit J → ∞.
pub fn var_cv_limit(model: CvVarianceModel) -> f64 {
    model.c
}

pub fn var_bounds(model: CvVarianceModel, j: usize) -> (f64, f64) {
    let j = j.max(1) as f64;
    (model.c.max(model.v / j), model.v)
}

pub fn resampling_effectiveness(rho: f64, j: usize) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidRho(rho));
    }
    if j == 0 {
        return Err(Error::InvalidJ(j));
    }
    if rho == 1.0 {
        return Ok(1.0);
    }
    let rj = rho * j as f64;
    Ok(rj / (rj + 1.0 - rho))
}

pub fn reduction_ratio(rho: f64, j: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidRho(rho));
    }
    if j < 2 {
        return Err(Error::InvalidJ(j));
    }
    let jm = (j - 1) as f64;
    Ok((1.0 - rho) / (jm + jm * jm * rho))
}

/// Naive correlation `n2/n`, a rough stand-in when no moment estimates exist.
pub fn naive_rho(n: usize, n1: usize) -> f64 {
    (n - n1) as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "target")]
pub enum Criterion {
    Effectiveness(f64),
    Reduction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResamplingPlan {
    pub criterion: Criterion,
    pub rho: f64,
    #[serde(rename = "J")]
    pub j: usize,
    pub achieved_re: f64,
    /// Undefined at J = 1.
    pub achieved_rr: Option<f64>,
}

fn plan(criterion: Criterion, rho: f64, j: usize) -> Result<ResamplingPlan> {
    Ok(ResamplingPlan {
        criterion,
        rho,
        j,
        achieved_re: resampling_effectiveness(rho, j)?,
        achieved_rr: if j >= 2 {
            Some(reduction_ratio(rho, j)?)
        } else {
            None
        },
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRho(rho))
    }
}

fn usize_ceil(x: f64) -> usize {
    if x.is_finite() && x > 1.0 {
        x.ceil() as usize
    } else {
        1
    }
}

pub fn j_for_effectiveness(rho: f64, pi: f64) -> Result<ResamplingPlan> {
    check_rho(rho)?;
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::InvalidPi(pi));
    }
    let meets = |j: usize| resampling_effectiveness(rho, j).map(|re| re >= pi - BOUNDARY_EPS);
    let mut j = usize_ceil(pi * (1.0 - rho) / ((1.0 - pi) * rho));
    while !meets(j)? {
        j += 1;
    }
    while j > 1 && meets(j - 1)? {
        j -= 1;
    }
    plan(Criterion::Effectiveness(pi), rho, j)
}

pub fn j_for_reduction(rho: f64, r: f64) -> Result<ResamplingPlan> {
    check_rho(rho)?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidR(r));
    }
    let meets = |j: usize| reduction_ratio(rho, j).map(|rr| rr <= r + BOUNDARY_EPS);
    let closed =
        1.0 - 1.0 / (2.0 * rho) + (1.0 / (4.0 * rho * rho) + (1.0 - rho) / (rho * r)).sqrt();
    let mut j = usize_ceil(closed).max(2);
    while !meets(j)? {
        j += 1;
    }
    while j > 2 && meets(j - 1)? {
        j -= 1;
    }
    plan(Criterion::Reduction(r), rho, j)
}
