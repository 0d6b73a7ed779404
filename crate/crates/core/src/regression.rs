//! Test-error moments for least-squares regression under squared error loss.
//!
//! Covariates are treated as fixed. Closed forms depend on the design only
//! through `n`, `p`, `θ = Σ h_ii²` and the error moments `σ²`, `μ₄`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::split::{argmin_first, ceil_half, divisors};
use crate::variance::{self, CvVarianceModel, ResamplingPlan};

pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignShape {
    pub n: usize,
    pub p: usize,
    pub theta: f64,
    pub sigma2: f64,
    pub mu4: f64,
}

pub trait HasShape {
    fn shape(&self) -> DesignShape;
}

impl HasShape for DesignShape {
    fn shape(&self) -> DesignShape {
        *self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionStats {
    pub n: usize,
    pub p: usize,
    pub theta: f64,
    pub leverages: Vec<f64>,
    #[serde(skip)]
    pub v_hat: DMatrix<f64>,
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub mu4_hat: f64,
    pub condition: f64,
    #[serde(skip)]
    x: DMatrix<f64>,
    #[serde(skip)]
    xtx_inv: DMatrix<f64>,
}

impl HasShape for RegressionStats {
    fn shape(&self) -> DesignShape {
        DesignShape {
            n: self.n,
            p: self.p,
            theta: self.theta,
            sigma2: self.sigma2_hat,
            mu4: self.mu4_hat,
        }
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a symmetric Gram matrix with a 1-norm condition guard.
pub(crate) fn guarded_inverse(xtx: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let inv = xtx
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularDesign(f64::INFINITY))?;
    let cond = norm1(xtx) * norm1(&inv);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularDesign(cond));
    }
    Ok((inv, cond))
}

impl RegressionStats {
    /// `h_{ii'} = x_iᵀ(XᵀX)⁻¹x_i'`.
    pub fn hat_entry(&self, i: usize, j: usize) -> f64 {
        let xi = self.x.row(i);
        let xj = self.x.row(j);
        (xi * &self.xtx_inv * xj.transpose())[(0, 0)]
    }

    /// `(C₁, C₂, C₃, C₄)` computed directly from the `n×n` matrix `XVXᵀ`.
    pub fn hat_sums_direct(&self) -> [f64; 4] {
        let n = self.n;
        let m = &self.x * &self.v_hat * self.x.transpose();
        let c1: f64 = (0..n).map(|i| m[(i, i)]).sum();
        let c2: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        let mut c3 = 0.0;
        let mut c4 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                c3 += 2.0 * m[(i, j)] * m[(i, j)];
                c4 += 2.0 * m[(i, i)] * m[(j, j)];
            }
        }
        [c1, c2, c3, c4]
    }

    /// The same sums from `n`, `p`, `θ`.
    pub fn hat_sums_identity(&self) -> [f64; 4] {
        let n2 = (self.n * self.n) as f64;
        let p = self.p as f64;
        [
            self.n as f64 * p,
            n2 * self.theta,
            n2 * (p - self.theta),
            n2 * (p * p - self.theta),
        ]
    }
}

pub fn design_stats(x: &DMatrix<f64>, y: &[f64]) -> Result<RegressionStats> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "X has {n} rows, y has {}",
            y.len()
        )));
    }
    if n <= p || p == 0 {
        return Err(Error::ShapeMismatch(format!(
            "need n > p >= 1, got n={n}, p={p}"
        )));
    }
    let xtx = x.transpose() * x;
    let (xtx_inv, condition) = guarded_inverse(&xtx)?;
    let yv = DVector::from_column_slice(y);
    let beta = &xtx_inv * (x.transpose() * &yv);
    let resid = &yv - x * &beta;
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let mu4 = resid.iter().map(|r| r.powi(4)).sum::<f64>() / n as f64;
    let leverages: Vec<f64> = (0..n)
        .map(|i| {
            let xi = x.row(i);
            (xi * &xtx_inv * xi.transpose())[(0, 0)]
        })
        .collect();
    let theta = leverages.iter().map(|h| h * h).sum();
    Ok(RegressionStats {
        n,
        p,
        theta,
        leverages,
        v_hat: &xtx_inv * n as f64,
        beta_hat: beta.iter().copied().collect(),
        sigma2_hat: rss / (n - p) as f64,
        mu4_hat: mu4,
        condition,
        x: x.clone(),
        xtx_inv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionCvMoments {
    pub mean: f64,
    pub variance: f64,
    pub covariance: f64,
    pub order_note: &'static str,
}

fn check_n1(n: usize, n1: usize) -> Result<()> {
    if n1 < ceil_half(n) || n1 >= n {
        return Err(Error::OutOfRange(format!(
            "n1 must lie in [{}, {}], got {n1}",
            ceil_half(n),
            n.saturating_sub(1)
        )));
    }
    if n < 3 {
        return Err(Error::OutOfRange(format!("n must be >= 3, got {n}")));
    }
    Ok(())
}

/// Full closed forms under normal errors.
pub fn random_cv_moments_normal(s: &impl HasShape, n1: usize) -> Result<RegressionCvMoments> {
    let d = s.shape();
    check_n1(d.n, n1)?;
    let (n, n1f) = (d.n as f64, n1 as f64);
    let n2 = n - n1f;
    let p = d.p as f64;
    let th = d.theta;
    let s4 = d.sigma2 * d.sigma2;
    let variance = s4
        * (2.0 / n2
            + 4.0 * p / (n1f * n2)
            + (3.0 * n + 1.0) * th / ((n - 1.0) * n1f * n2)
            + (2.0 * n * (n2 - 1.0) - n1f * p) * p / ((n - 1.0) * n1f * n1f * n2));
    let covariance = s4
        * (2.0 / n
            + (n + 2.0 * n1f) * p / (n * (n - 1.0) * n1f)
            + 2.0 * (n + n1f * (n1f - 2.0) - 1.0) * th / ((n - 1.0) * (n - 2.0) * n1f * n1f)
            + ((n - 2.0) * (n + n1f * n1f + 2.0 * n1f * n2 - 1.0) - (n1f - 1.0).powi(2))
                * (p - th)
                / ((n - 1.0).powi(2) * (n - 2.0) * n1f.powi(4)));
    Ok(RegressionCvMoments {
        mean: d.sigma2 * (1.0 + p / n1f),
        variance,
        covariance,
        order_note: "full closed form",
    })
}

/// `σ⁴{2/n2 + (4p+3θ)/(n1 n2)}`.
pub fn random_cv_variance_leading(s: &impl HasShape, n1: usize) -> Result<f64> {
    let d = s.shape();
    check_n1(d.n, n1)?;
    let n1f = n1 as f64;
    let n2 = (d.n - n1) as f64;
    let s4 = d.sigma2 * d.sigma2;
    Ok(s4 * (2.0 / n2 + (4.0 * d.p as f64 + 3.0 * d.theta) / (n1f * n2)))
}

/// `(μ₄ - σ⁴)/n2 + (4p+3θ)σ⁴/(n1 n2)`.
pub fn random_cv_var_nonnormal(s: &impl HasShape, n1: usize) -> Result<f64> {
    let d = s.shape();
    check_n1(d.n, n1)?;
    let n1f = n1 as f64;
    let n2 = (d.n - n1) as f64;
    let s4 = d.sigma2 * d.sigma2;
    Ok((d.mu4 - s4) / n2 + (4.0 * d.p as f64 + 3.0 * d.theta) * s4 / (n1f * n2))
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(Error::OutOfRange(format!(
            "need 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    if n % k != 0 {
        return Err(Error::NotDivisible { n, k });
    }
    Ok(())
}

/// Moments of one fold's test error and of two distinct folds under normal errors.
pub fn kfold_cv_moments_normal(s: &impl HasShape, k: usize) -> Result<RegressionCvMoments> {
    let d = s.shape();
    check_k(d.n, k)?;
    let (n, kf, p, th) = (d.n as f64, k as f64, d.p as f64, d.theta);
    let s4 = d.sigma2 * d.sigma2;
    let km = kf - 1.0;
    let variance = s4
        * (2.0 * kf / n
            + 4.0 * kf * kf * p / (km * n * n)
            + 3.0 * kf * kf * th / (km * n * n)
            + p * kf.powi(3) / (km * km * n * n));
    let covariance = s4
        * (2.0 * kf.powi(4) * (p - th) / (km.powi(4) * n * (n - 1.0))
            - kf * kf * th / (km * km * n * (n - 1.0)));
    Ok(RegressionCvMoments {
        mean: d.sigma2 * (1.0 + kf * p / (km * n)),
        variance,
        covariance,
        order_note: "terms of order o(1/n^2) dropped",
    })
}

/// Variance of the k-fold estimator itself.
pub fn kfold_cv_variance_normal(s: &impl HasShape, k: usize) -> Result<f64> {
    let d = s.shape();
    check_k(d.n, k)?;
    let (n, kf, p, th) = (d.n as f64, k as f64, d.p as f64, d.theta);
    let km = kf - 1.0;
    let s4 = d.sigma2 * d.sigma2;
    Ok(s4
        * (2.0 / n
            + kf * ((p - th) * n + (3.0 * n - 4.0) * p + 3.0 * th * (n - 1.0))
                / (km * n * n * (n - 1.0))
            + kf * kf * p / (km * km * n * n)
            + 2.0 * kf.powi(3) * (p - th) / (km.powi(3) * n * (n - 1.0))))
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionSplit {
    pub n1_opt: usize,
    pub n1_opt_nonnormal: usize,
    pub k_opt: usize,
    /// Whether the grid argmins match `ceil(n/2)` and `n`.
    pub matches_theory: bool,
    pub variance_curve: Vec<(usize, f64)>,
    pub kfold_curve: Vec<(usize, f64)>,
}

pub fn regression_optimal_split(s: &impl HasShape) -> Result<RegressionSplit> {
    let d = s.shape();
    let lo = ceil_half(d.n);
    let variance_curve = (lo..d.n)
        .map(|t| Ok((t, random_cv_moments_normal(&d, t)?.variance)))
        .collect::<Result<Vec<_>>>()?;
    let nonnormal = (lo..d.n)
        .map(|t| Ok((t, random_cv_var_nonnormal(&d, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let kfold_curve = divisors(d.n)
        .into_iter()
        .map(|k| Ok((k, kfold_cv_variance_normal(&d, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let n1_opt = argmin_first(variance_curve.iter().copied())
        .expect("non-empty")
        .0;
    let n1_opt_nonnormal = argmin_first(nonnormal).expect("non-empty").0;
    let k_opt = argmin_first(kfold_curve.iter().copied())
        .expect("non-empty")
        .0;
    Ok(RegressionSplit {
        n1_opt,
        n1_opt_nonnormal,
        k_opt,
        matches_theory: n1_opt == lo && n1_opt_nonnormal == lo && k_opt == d.n,
        variance_curve,
        kfold_curve,
    })
}

/// J rules at the regression optimum, where ρ = 1/2.
pub fn regression_resampling_plan(criterion: variance::Criterion) -> Result<ResamplingPlan> {
    match criterion {
        variance::Criterion::Effectiveness(pi) => variance::j_for_effectiveness(0.5, pi),
        variance::Criterion::Reduction(r) => variance::j_for_reduction(0.5, r),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionTableRow {
    pub label: String,
    pub n1: usize,
    pub v: f64,
    pub c: f64,
    pub var_cv_1: f64,
    pub var_cv_10: f64,
    pub var_cv_15: f64,
    pub var_cv_inf: f64,
}

/// Training sizes `opt, .75n, .80n, .85n, .90n`, clamped to the valid range.
pub fn table_n1_grid(n: usize, n1_opt: usize) -> Vec<(String, usize)> {
    let mut rows = vec![("opt".to_string(), n1_opt)];
    for f in [0.75, 0.80, 0.85, 0.90] {
        let t = ((f * n as f64).round() as usize).clamp(ceil_half(n), n - 1);
        rows.push((format!("{f:.2}n"), t));
    }
    rows
}

/// Var(μ̂_CV,J) at the table's training sizes from the full closed forms.
pub fn regression_table(s: &impl HasShape, n1_opt: usize) -> Result<Vec<RegressionTableRow>> {
    let d = s.shape();
    table_n1_grid(d.n, n1_opt)
        .into_iter()
        .map(|(label, n1)| {
            let m = random_cv_moments_normal(&d, n1)?;
            let model = CvVarianceModel {
                v: m.variance,
                c: m.covariance,
            };
            Ok(RegressionTableRow {
                label,
                n1,
                v: m.variance,
                c: m.covariance,
                var_cv_1: variance::var_cv(model, 1),
                var_cv_10: variance::var_cv(model, 10),
                var_cv_15: variance::var_cv(model, 15),
                var_cv_inf: variance::var_cv_limit(model),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: usize, p: usize, theta: f64) -> DesignShape {
        DesignShape {
            n,
            p,
            theta,
            sigma2: 1.0,
            mu4: 3.0,
        }
    }

    #[test]
    fn intercept_only_leverage() {
        let n = 7;
        let x = DMatrix::from_element(n, 1, 1.0);
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = design_stats(&x, &y).unwrap();
        for h in &s.leverages {
            assert!((h - 1.0 / n as f64).abs() < 1e-15);
        }
        assert!((s.theta - 1.0 / n as f64).abs() < 1e-15);
        assert!((s.leverages.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s.beta_hat[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_design_gives_identity_v() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let s = design_stats(&x, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((&s.v_hat - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn singular_design_rejected() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            design_stats(&x, &[1.0, 2.0, 3.0, 4.0]),
            Err(Error::SingularDesign(_))
        ));
        assert!(design_stats(&x, &[1.0]).is_err());
    }

    #[test]
    fn random_cv_mean_example() {
        let m = random_cv_moments_normal(&shape(40, 4, 1.0), 20).unwrap();
        assert!((m.mean - 1.2).abs() < 1e-15);
        assert!(m.variance >= m.covariance && m.covariance >= 0.0);
    }

    #[test]
    fn nonnormal_reduces_to_normal_leading_order() {
        let s = shape(100, 5, 0.4);
        for n1 in 50..100 {
            let a = random_cv_var_nonnormal(&s, n1).unwrap();
            let b = random_cv_variance_leading(&s, n1).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
        let flat = DesignShape { mu4: 1.0, ..s };
        let v = random_cv_var_nonnormal(&flat, 60).unwrap();
        assert!((v - (20.0 + 1.2) / (60.0 * 40.0)).abs() < 1e-15);
    }

    #[test]
    fn kfold_examples() {
        let s = shape(100, 5, 0.5);
        let m = kfold_cv_moments_normal(&s, 10).unwrap();
        // the excess over 2k/n shrinks like 1/n²
        let excess = |n: usize| {
            let v = kfold_cv_moments_normal(&shape(n, 5, 0.5), 10)
                .unwrap()
                .variance;
            (v - 20.0 / n as f64) * (n * n) as f64
        };
        assert!(m.variance > 0.2);
        assert!((excess(100) - excess(1000)).abs() < 1e-9 * excess(100));
        assert!((m.mean - (1.0 + 10.0 * 5.0 / 900.0)).abs() < 1e-15);
        let extreme = shape(40, 3, 3.0);
        let m = kfold_cv_moments_normal(&extreme, 2).unwrap();
        let want = -4.0 * 3.0 / (40.0 * 39.0);
        assert!((m.covariance - want).abs() < 1e-15);
        assert!(matches!(
            kfold_cv_moments_normal(&s, 3),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn assembled_kfold_matches_fold_moments() {
        for &(n, p, th) in &[(60usize, 5usize, 0.3), (120, 3, 0.1), (40, 4, 2.0)] {
            let s = shape(n, p, th);
            for k in divisors(n) {
                let m = kfold_cv_moments_normal(&s, k).unwrap();
                let kf = k as f64;
                let combined = m.variance / kf + (kf - 1.0) / kf * m.covariance;
                let direct = kfold_cv_variance_normal(&s, k).unwrap();
                assert!(
                    (combined - direct).abs() < 1e-12 * direct.abs().max(1.0),
                    "{n} {k}"
                );
            }
        }
    }

    #[test]
    fn optimal_split_rules() {
        let s = shape(40, 5, 0.6);
        let r = regression_optimal_split(&s).unwrap();
        assert_eq!((r.n1_opt, r.k_opt), (20, 40));
        assert!(r.matches_theory);
        let plan = regression_resampling_plan(variance::Criterion::Effectiveness(0.9)).unwrap();
        assert_eq!(plan.j, 9);
        let plan = regression_resampling_plan(variance::Criterion::Reduction(0.01)).unwrap();
        assert_eq!(plan.j, 11);
        let plan = regression_resampling_plan(variance::Criterion::Effectiveness(0.5)).unwrap();
        assert_eq!(plan.j, 1);
    }

    #[test]
    fn table_grid_matches_layout() {
        let g = table_n1_grid(60, 30);
        let n1s: Vec<usize> = g.iter().map(|r| r.1).collect();
        assert_eq!(n1s, vec![30, 45, 48, 51, 54]);
    }
}
