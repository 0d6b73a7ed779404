//! Optimal training size for 0/1-loss classification with logistic regression.
//!
//! The error of observation `i` depends on the training set through the
//! sign of `x_iᵀβ̂_S`, approximated as normal with covariance `σ²V/n1`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::normal::{bivariate_normal_cdf, std_normal_cdf};
use crate::regression::guarded_inverse;
use crate::split::{argmin_first, ceil_half};

const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 50;
const DIVERGENCE_NORM: f64 = 1e4;
const STEP_TOL: f64 = 1e-12;
const LL_NOISE: f64 = 1e-12;

/// Which matrix stands in for `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum VMode {
    /// `n(XᵀX)⁻¹`
    #[default]
    Gram,
    /// `n(XᵀŴX)⁻¹`, the inverse Fisher information scaled by `n`.
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticOptions {
    pub sigma2: f64,
    pub v_mode: VMode,
    pub parallel: bool,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            sigma2: 1.0,
            v_mode: VMode::Gram,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub beta_hat: DVector<f64>,
    pub sigma2_hat: f64,
    pub v_hat: DMatrix<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + e^e) computed stably
            let softplus = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            yi * e - softplus
        })
        .sum()
}

fn check_binary(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidConfig("response must be 0/1".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::NoVariation);
    }
    Ok(())
}

/// Maximum-likelihood fit by Newton–Raphson (IRLS) with step halving.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], opts: &LogisticOptions) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "X has {n} rows, y has {}",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::ShapeMismatch(format!(
            "need n > p, got n={n}, p={p}"
        )));
    }
    check_binary(y)?;
    if !(opts.sigma2 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma2 must be positive, got {}",
            opts.sigma2
        )));
    }
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        let prob = (x * &beta).map(sigmoid);
        let score = x.transpose() * (&yv - &prob);
        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        let w = prob.map(|q| q * (1.0 - q));
        let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * w[i]);
        let info = x.transpose() * xw;
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => return Err(Error::Separation),
        };
        if step.amax() <= STEP_TOL * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        // near the optimum ll only moves at rounding level
        let floor = ll - LL_NOISE * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = log_likelihood(x, y, &next);
        while next_ll < floor && t > 1e-10 {
            t *= 0.5;
            next = &beta + &step * t;
            next_ll = log_likelihood(x, y, &next);
        }
        beta = next;
        ll = next_ll;
        if beta.norm() > DIVERGENCE_NORM || !ll.is_finite() {
            return Err(Error::Separation);
        }
    }
    if !converged {
        return Err(Error::Separation);
    }
    // a vanishing score can also mean the fit has run off to a separating direction
    let fitted = (x * &beta).map(sigmoid);
    if fitted.iter().zip(y).all(|(q, yi)| (q - yi).abs() < 1e-6) {
        return Err(Error::Separation);
    }
    let xtx = match opts.v_mode {
        VMode::Gram => x.transpose() * x,
        VMode::Fisher => {
            let prob = (x * &beta).map(sigmoid);
            let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * prob[i] * (1.0 - prob[i]));
            x.transpose() * xw
        }
    };
    let (inv, _) = guarded_inverse(&xtx)?;
    Ok(LogisticFit {
        beta_hat: beta,
        sigma2_hat: opts.sigma2,
        v_hat: inv * n as f64,
        iterations,
        log_likelihood: ll,
    })
}

/// Per-row quantities of the planner. Identical covariate rows are grouped;
/// all per-row vectors are indexed by distinct row (`group`) and expanded
/// through `row_group`.
#[derive(Debug, Clone, Serialize)]
pub struct LogisticDesign {
    pub n: usize,
    pub p: usize,
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    /// Success probability per observation.
    pub p_i: Vec<f64>,
    /// Standardized score per observation.
    pub zeta_i: Vec<f64>,
    #[serde(skip)]
    group_p: Vec<f64>,
    #[serde(skip)]
    group_zeta: Vec<f64>,
    #[serde(skip)]
    group_count: Vec<usize>,
    #[serde(skip)]
    row_group: Vec<usize>,
    /// Correlations between distinct groups, row-major `g × g`.
    #[serde(skip)]
    group_rho: Vec<f64>,
}

impl LogisticDesign {
    pub fn from_fit(x: &DMatrix<f64>, fit: &LogisticFit) -> Result<Self> {
        let (n, p) = x.shape();
        let mut reps: Vec<usize> = Vec::new();
        let mut row_group = Vec::with_capacity(n);
        for i in 0..n {
            let found = reps
                .iter()
                .position(|&r| (0..p).all(|j| x[(r, j)] == x[(i, j)]));
            match found {
                Some(g) => row_group.push(g),
                None => {
                    row_group.push(reps.len());
                    reps.push(i);
                }
            }
        }
        let g = reps.len();
        let mut group_count = vec![0usize; g];
        for &gi in &row_group {
            group_count[gi] += 1;
        }
        let sigma = fit.sigma2_hat.sqrt();
        let vx: Vec<DVector<f64>> = reps
            .iter()
            .map(|&r| &fit.v_hat * x.row(r).transpose())
            .collect();
        let quad: Vec<f64> = reps
            .iter()
            .zip(&vx)
            .map(|(&r, v)| x.row(r).transpose().dot(v))
            .collect();
        if quad.iter().any(|q| !(*q > 0.0)) {
            return Err(Error::SingularDesign(f64::INFINITY));
        }
        let lin: Vec<f64> = reps
            .iter()
            .map(|&r| x.row(r).transpose().dot(&fit.beta_hat))
            .collect();
        let group_p: Vec<f64> = lin.iter().map(|&l| sigmoid(l)).collect();
        let group_zeta: Vec<f64> = lin
            .iter()
            .zip(&quad)
            .map(|(&l, &q)| l / (sigma * q.sqrt()))
            .collect();
        let mut group_rho = vec![1.0; g * g];
        for a in 0..g {
            for b in (a + 1)..g {
                let cross = x.row(reps[a]).transpose().dot(&vx[b]);
                let r = (cross / (quad[a] * quad[b]).sqrt()).clamp(-1.0, 1.0);
                group_rho[a * g + b] = r;
                group_rho[b * g + a] = r;
            }
        }
        Ok(LogisticDesign {
            n,
            p,
            beta_hat: fit.beta_hat.iter().copied().collect(),
            sigma2_hat: fit.sigma2_hat,
            p_i: row_group.iter().map(|&gi| group_p[gi]).collect(),
            zeta_i: row_group.iter().map(|&gi| group_zeta[gi]).collect(),
            group_p,
            group_zeta,
            group_count,
            row_group,
            group_rho,
        })
    }

    /// Builds a design directly from per-row quantities.
    pub fn from_parts(p_i: Vec<f64>, zeta_i: Vec<f64>, rho: &DMatrix<f64>) -> Result<Self> {
        let n = p_i.len();
        if zeta_i.len() != n || rho.shape() != (n, n) {
            return Err(Error::ShapeMismatch(
                "p_i, zeta_i and rho disagree in size".into(),
            ));
        }
        Ok(LogisticDesign {
            n,
            p: 0,
            beta_hat: Vec::new(),
            sigma2_hat: 1.0,
            group_p: p_i.clone(),
            group_zeta: zeta_i.clone(),
            group_count: vec![1; n],
            row_group: (0..n).collect(),
            group_rho: rho.transpose().iter().copied().collect(),
            p_i,
            zeta_i,
        })
    }

    pub fn distinct_rows(&self) -> usize {
        self.group_count.len()
    }

    pub fn rho_pair(&self, i: usize, j: usize) -> f64 {
        let g = self.group_count.len();
        self.group_rho[self.row_group[i] * g + self.row_group[j]]
    }
}

fn single_error(p: f64, zeta: f64, root_n1: f64) -> f64 {
    let x = root_n1 * zeta;
    std_normal_cdf(-x) * p + std_normal_cdf(x) * (1.0 - p)
}

/// Probability that both observations are misclassified.
fn pair_error(pa: f64, pb: f64, za: f64, zb: f64, rho: f64, root_n1: f64) -> Result<f64> {
    let x = root_n1 * za;
    let y = root_n1 * zb;
    Ok(bivariate_normal_cdf(-x, -y, rho)? * pa * pb
        + bivariate_normal_cdf(-x, y, -rho)? * pa * (1.0 - pb)
        + bivariate_normal_cdf(x, -y, -rho)? * (1.0 - pa) * pb
        + bivariate_normal_cdf(x, y, rho)? * (1.0 - pa) * (1.0 - pb))
}

fn check_n1(n: usize, n1: usize) -> Result<()> {
    if n1 < ceil_half(n) || n1 >= n {
        return Err(Error::OutOfRange(format!(
            "n1 must lie in [{}, {}], got {n1}",
            ceil_half(n),
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

/// `(e_i, e_{i,i'})` at training size `n1`; the diagonal of the pair matrix is `e_i`.
pub fn classification_error_moments(
    design: &LogisticDesign,
    n1: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_n1(design.n, n1)?;
    let root = (n1 as f64).sqrt();
    let g = design.group_count.len();
    let ge: Vec<f64> = (0..g)
        .map(|a| single_error(design.group_p[a], design.group_zeta[a], root))
        .collect();
    let mut gpair = DMatrix::zeros(g, g);
    for a in 0..g {
        for b in a..g {
            let v = pair_error(
                design.group_p[a],
                design.group_p[b],
                design.group_zeta[a],
                design.group_zeta[b],
                design.group_rho[a * g + b],
                root,
            )?;
            gpair[(a, b)] = v;
            gpair[(b, a)] = v;
        }
    }
    let n = design.n;
    let e: Vec<f64> = design.row_group.iter().map(|&a| ge[a]).collect();
    let pair = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            e[i]
        } else {
            gpair[(design.row_group[i], design.row_group[j])]
        }
    });
    Ok((e, pair))
}

/// Variance of one average test-set error from the per-observation moments.
pub fn var_mu_j_general(e_i: &[f64], e_pair: &DMatrix<f64>, n: usize, n1: usize) -> Result<f64> {
    if e_i.len() != n || e_pair.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "expected {n} moments and a {n}x{n} pair matrix, got {} and {:?}",
            e_i.len(),
            e_pair.shape()
        )));
    }
    if n1 == 0 || n1 >= n {
        return Err(Error::OutOfRange(format!(
            "need 0 < n1 < n, got n1={n1}, n={n}"
        )));
    }
    let nf = n as f64;
    let n2 = (n - n1) as f64;
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..n {
        diag += nf * e_pair[(i, i)] - n2 * e_i[i] * e_i[i];
        for j in (i + 1)..n {
            off += nf * (n2 - 1.0) * e_pair[(i, j)] - (nf - 1.0) * n2 * e_i[i] * e_i[j];
        }
    }
    Ok((diag + 2.0 / (nf - 1.0) * off) / (nf * nf * n2))
}

/// The same variance as `var_mu_j_general`, summed over distinct-row groups
/// without expanding the `n×n` pair matrix.
fn grouped_variance(design: &LogisticDesign, n1: usize) -> Result<(Vec<f64>, f64)> {
    let root = (n1 as f64).sqrt();
    let g = design.group_count.len();
    let cnt: Vec<f64> = design.group_count.iter().map(|&c| c as f64).collect();
    let ge: Vec<f64> = (0..g)
        .map(|a| single_error(design.group_p[a], design.group_zeta[a], root))
        .collect();
    let nf = design.n as f64;
    let n2 = (design.n - n1) as f64;
    let mut diag = 0.0;
    let mut off = 0.0;
    for a in 0..g {
        diag += cnt[a] * (nf * ge[a] - n2 * ge[a] * ge[a]);
        for b in a..g {
            let pairs = if a == b {
                cnt[a] * (cnt[a] - 1.0) / 2.0
            } else {
                cnt[a] * cnt[b]
            };
            if pairs == 0.0 {
                continue;
            }
            let e_ab = pair_error(
                design.group_p[a],
                design.group_p[b],
                design.group_zeta[a],
                design.group_zeta[b],
                design.group_rho[a * g + b],
                root,
            )?;
            off += pairs * (nf * (n2 - 1.0) * e_ab - (nf - 1.0) * n2 * ge[a] * ge[b]);
        }
    }
    let v = (diag + 2.0 / (nf - 1.0) * off) / (nf * nf * n2);
    let e = design.row_group.iter().map(|&a| ge[a]).collect();
    Ok((e, v))
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveEntry {
    pub n1: usize,
    pub e: Vec<f64>,
    pub v: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceCurve {
    pub entries: Vec<CurveEntry>,
    pub argmin_n1: usize,
}

impl VarianceCurve {
    pub fn v_at(&self, n1: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.n1 == n1).map(|e| e.v)
    }
}

pub fn variance_curve(design: &LogisticDesign, parallel: bool) -> Result<VarianceCurve> {
    let lo = ceil_half(design.n);
    let grid: Vec<usize> = (lo..design.n).collect();
    let eval = |&n1: &usize| grouped_variance(design, n1).map(|(e, v)| CurveEntry { n1, e, v });
    let entries: Vec<CurveEntry> = if parallel {
        grid.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        grid.iter().map(eval).collect::<Result<_>>()?
    };
    let argmin_n1 = argmin_first(entries.iter().map(|e| (e.n1, e.v)))
        .ok_or_else(|| Error::OutOfRange("empty n1 grid".into()))?
        .0;
    Ok(VarianceCurve { entries, argmin_n1 })
}

/// Fit, derive the design quantities, and sweep `n1` over `ceil(n/2)..n`.
pub fn algorithm1_optimal_n1(
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &LogisticOptions,
) -> Result<(LogisticDesign, VarianceCurve)> {
    let fit = fit_logistic(x, y, opts)?;
    let design = LogisticDesign::from_fit(x, &fit)?;
    let curve = variance_curve(&design, opts.parallel)?;
    Ok((design, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn intercept_only_fits() {
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let fit = fit_logistic(&intercept(6), &y, &LogisticOptions::default()).unwrap();
        assert!(fit.beta_hat[0].abs() < 1e-10);
        let y = [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let fit = fit_logistic(&intercept(8), &y, &LogisticOptions::default()).unwrap();
        assert!((fit.beta_hat[0] - 3f64.ln()).abs() < 1e-9);
        assert!((fit.v_hat[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_responses() {
        let x = DMatrix::from_row_slice(6, 2, &[1., 0., 1., 1., 1., 2., 1., 3., 1., 4., 1., 5.]);
        let opts = LogisticOptions::default();
        assert!(matches!(
            fit_logistic(&x, &[1.0; 6], &opts),
            Err(Error::NoVariation)
        ));
        let separated = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            fit_logistic(&x, &separated, &opts),
            Err(Error::Separation)
        ));
        assert!(fit_logistic(&x, &[0.0, 2.0, 0.0, 1.0, 1.0, 1.0], &opts).is_err());
    }

    #[test]
    fn error_moment_special_cases() {
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let d = LogisticDesign::from_parts(vec![0.3, 0.8], vec![0.0, 0.4], &rho).unwrap();
        let (e, pair) = classification_error_moments(&d, 1).unwrap();
        assert!((e[0] - 0.5).abs() < 1e-15);
        assert!((pair[(0, 1)] - e[0] * e[1]).abs() < 1e-12);
        assert_eq!(pair[(1, 1)], e[1]);
    }

    #[test]
    fn constant_moments_reduce_to_bernoulli() {
        let n = 10;
        let e = 0.3;
        let ev = vec![e; n];
        let mut pair = DMatrix::from_element(n, n, e * e);
        for i in 0..n {
            pair[(i, i)] = e;
        }
        for n1 in 5..n {
            let v = var_mu_j_general(&ev, &pair, n, n1).unwrap();
            let want = e * (1.0 - e) / (n - n1) as f64;
            assert!((v - want).abs() < 1e-14);
        }
        assert!(var_mu_j_general(&ev[..3], &pair, n, 5).is_err());
    }

    #[test]
    fn grouped_sum_matches_expanded_formula() {
        let x = DMatrix::from_row_slice(
            12,
            2,
            &[
                1., 0., 1., 1., 1., 1., 1., 2., 1., 2., 1., 2., 1., 3., 1., 0., 1., 4., 1., 1., 1.,
                3., 1., 5.,
            ],
        );
        let y = [0., 0., 1., 0., 1., 1., 1., 0., 1., 0., 0., 1.];
        let opts = LogisticOptions {
            parallel: false,
            ..Default::default()
        };
        let (design, curve) = algorithm1_optimal_n1(&x, &y, &opts).unwrap();
        assert!(design.distinct_rows() < 12);
        for entry in &curve.entries {
            let (e, pair) = classification_error_moments(&design, entry.n1).unwrap();
            let v = var_mu_j_general(&e, &pair, 12, entry.n1).unwrap();
            assert!(
                (v - entry.v).abs() < 1e-12,
                "{} {} {}",
                entry.n1,
                v,
                entry.v
            );
        }
        let par = variance_curve(&design, true).unwrap();
        for (a, b) in par.entries.iter().zip(&curve.entries) {
            assert_eq!(a.v.to_bits(), b.v.to_bits());
        }
    }
}
