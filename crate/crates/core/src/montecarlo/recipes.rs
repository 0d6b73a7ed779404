//! Data generators for the regression and classification studies.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use super::{stream_rng, DistSpec, RegressionDesign, COVARIATE_STREAM};
use crate::error::{Error, Result};
use crate::logistic::{algorithm1_optimal_n1, LogisticOptions};
use crate::regression::table_n1_grid;

/// Intercept, Bernoulli(.6), Poisson(2), U(0,5), U(0,3).
pub const REGRESSION_BETA: [f64; 5] = [1.0, 1.0, 1.0, -1.0, 1.0];
/// Intercept, Bernoulli(.6), Poisson(2), uniform on {0,..,4}.
pub const LOGISTIC_BETA: [f64; 4] = [0.5, 1.0, 1.0, -1.0];

fn bad(e: impl std::fmt::Display) -> Error {
    Error::InvalidParams(e.to_string())
}

fn covariate_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = stream_rng(seed, 0, 0);
    rng.set_stream(COVARIATE_STREAM);
    rng
}

/// Linear-model design with covariates drawn once from `seed`.
pub fn regression_recipe(n: usize, seed: u64) -> Result<RegressionDesign> {
    if n < 6 {
        return Err(Error::InvalidConfig(format!("need n >= 6, got {n}")));
    }
    let mut rng = covariate_rng(seed);
    let bern = Bernoulli::new(0.6).map_err(bad)?;
    let pois = Poisson::new(2.0).map_err(bad)?;
    let u5 = Uniform::new(0.0, 5.0).map_err(bad)?;
    let u3 = Uniform::new(0.0, 3.0).map_err(bad)?;
    let mut x = DMatrix::zeros(n, 5);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = if bern.sample(&mut rng) { 1.0 } else { 0.0 };
        x[(i, 2)] = pois.sample(&mut rng);
        x[(i, 3)] = u5.sample(&mut rng);
        x[(i, 4)] = u3.sample(&mut rng);
    }
    Ok(RegressionDesign {
        x,
        beta: REGRESSION_BETA.to_vec(),
    })
}

/// Classification covariates drawn once from `seed`.
pub fn logistic_covariates(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n < 8 {
        return Err(Error::InvalidConfig(format!("need n >= 8, got {n}")));
    }
    let mut rng = covariate_rng(seed);
    let bern = Bernoulli::new(0.6).map_err(bad)?;
    let pois = Poisson::new(2.0).map_err(bad)?;
    let mut x = DMatrix::zeros(n, 4);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = if bern.sample(&mut rng) { 1.0 } else { 0.0 };
        x[(i, 2)] = pois.sample(&mut rng);
        x[(i, 3)] = rng.random_range(0..5u32) as f64;
    }
    Ok(x)
}

/// `y = 1{xᵀβ + ε > 0}`.
pub fn logistic_response(
    x: &DMatrix<f64>,
    beta: &[f64],
    error: &DistSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if beta.len() != x.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    let eps = error.draw(rng, x.nrows())?;
    Ok((0..x.nrows())
        .map(|i| {
            let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum();
            if eta + eps[i] > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

/// One repetition of the classification study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticRep {
    pub argmin_n1: usize,
    /// `(label, n1, v)` at the argmin and at `.75n .. .90n`.
    pub v_at: Vec<(String, usize, f64)>,
    /// `v` strictly increasing over `.75n, .80n, .85n, .90n`.
    pub increasing: bool,
}

/// Repetitions share covariates and redraw errors; a repetition whose fit
/// fails carries its error.
pub fn logistic_replicates(
    n: usize,
    error: &DistSpec,
    reps: usize,
    seed: u64,
    parallel: bool,
) -> Result<Vec<Result<LogisticRep>>> {
    error.validate()?;
    let x = logistic_covariates(n, seed)?;
    let opts = LogisticOptions {
        parallel: false,
        ..LogisticOptions::default()
    };
    let one = |r: usize| -> Result<LogisticRep> {
        let y = logistic_response(
            &x,
            &LOGISTIC_BETA,
            error,
            &mut stream_rng(seed, r as u64, 0),
        )?;
        let (_, curve) = algorithm1_optimal_n1(&x, &y, &opts)?;
        let v_at: Vec<(String, usize, f64)> = table_n1_grid(n, curve.argmin_n1)
            .into_iter()
            .map(|(label, n1)| {
                let v = curve.v_at(n1).unwrap_or(f64::NAN);
                (label, n1, v)
            })
            .collect();
        let increasing = v_at[1..].windows(2).all(|w| w[0].2 < w[1].2);
        Ok(LogisticRep {
            argmin_n1: curve.argmin_n1,
            v_at,
            increasing,
        })
    };
    Ok(if parallel {
        (0..reps).into_par_iter().map(one).collect()
    } else {
        (0..reps).map(one).collect()
    })
}

/// Average over `reps` samples of `max |n⁻¹XᵀX - Σ|` for rows drawn from
/// `N(0, Σ)`.
pub fn gram_convergence(sigma: &DMatrix<f64>, n: usize, reps: usize, seed: u64) -> Result<f64> {
    let d = sigma.nrows();
    if sigma.ncols() != d || d == 0 {
        return Err(Error::ShapeMismatch("Σ must be square".into()));
    }
    if n == 0 || reps == 0 {
        return Err(Error::InvalidConfig("need n >= 1 and reps >= 1".into()));
    }
    let l = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParams("Σ is not positive definite".into()))?
        .l();
    let std = Normal::new(0.0, 1.0).map_err(bad)?;
    let total: f64 = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64, 0);
            let z = DMatrix::from_fn(n, d, |_, _| std.sample(&mut rng));
            let x = z * l.transpose();
            let g = (x.transpose() * &x) / n as f64 - sigma;
            g.abs().max()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / reps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipes_are_reproducible() {
        let a = regression_recipe(40, 3).unwrap();
        assert_eq!(a.x, regression_recipe(40, 3).unwrap().x);
        assert!(a.x.column(1).iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(a.x.column(3).iter().all(|&v| (0.0..5.0).contains(&v)));
        let x = logistic_covariates(60, 3).unwrap();
        assert!(x
            .column(3)
            .iter()
            .all(|&v| v.fract() == 0.0 && (0.0..=4.0).contains(&v)));
    }

    #[test]
    fn logistic_fit_on_recipe() {
        let x = logistic_covariates(60, 11).unwrap();
        let y = logistic_response(
            &x,
            &LOGISTIC_BETA,
            &DistSpec::Normal {
                mu: 0.0,
                sigma: 1.0,
            },
            &mut stream_rng(11, 0, 0),
        )
        .unwrap();
        let (design, _) = algorithm1_optimal_n1(&x, &y, &LogisticOptions::default()).unwrap();
        assert!(design.p_i.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn overlapping_classes_always_fit() {
        // mixed outcomes at repeated rows rule out separation
        let e = DistSpec::Normal {
            mu: 0.0,
            sigma: 1.0,
        };
        let reps = logistic_replicates(60, &e, 20, 5, false).unwrap();
        assert!(reps.iter().all(|r| r.is_ok()));
    }

    #[test]
    fn gram_error_shrinks() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let a = gram_convergence(&s, 20, 200, 1).unwrap();
        let b = gram_convergence(&s, 500, 200, 1).unwrap();
        assert!(b < a / 3.0, "{a} {b}");
    }
}
