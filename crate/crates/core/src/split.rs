//! Optimal training size and fold count for the sample-mean rule.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::MomentParams;

pub fn ceil_half(n: usize) -> usize {
    n.div_ceil(2)
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

/// `A/n1 + B/(n-n1)` for any `1 <= n1 < n`; no range check, for plotting.
pub fn approx_v_any(n: usize, n1: usize, params: &MomentParams) -> f64 {
    let p = params.with_n(n);
    p.a() / n1 as f64 + p.b() / (n - n1) as f64
}

pub fn approx_v(n: usize, n1: usize, params: &MomentParams) -> Result<f64> {
    check_n1(n, n1)?;
    Ok(approx_v_any(n, n1, params))
}

pub fn approx_c(n: usize, n1: usize, params: &MomentParams) -> Result<f64> {
    check_n1(n, n1)?;
    let nf = n as f64;
    Ok((params.alpha + params.beta) / nf
        + params.gamma / (nf * nf)
        + params.delta / (n1 as f64 * nf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplitMethod {
    ClosedForm,
    GridArgmin,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitPlan {
    pub n: usize,
    pub n1_opt: usize,
    pub n2: usize,
    pub v: f64,
    pub c: f64,
    pub rho_opt: f64,
    pub method: SplitMethod,
    /// The theorem's rounded value before grid verification.
    pub theorem_n1: usize,
    /// Set when `B <= 0`, where the theorem does not apply.
    pub b_nonpositive: bool,
    /// `(n1, v)` over `ceil(n/2)..n`.
    pub curve: Vec<(usize, f64)>,
}

impl SplitPlan {
    pub fn v_at(&self, n1: usize) -> Option<f64> {
        let lo = ceil_half(self.n);
        if n1 < lo {
            return None;
        }
        self.curve.get(n1 - lo).map(|&(_, v)| v)
    }
}

/// The theorem's rule without any verification.
pub fn theorem_n1(n: usize, a: f64, b: f64) -> usize {
    if a <= b {
        return ceil_half(n);
    }
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let t = sa / (sa + sb) * n as f64;
    let rounded = (t + 0.5).floor() as usize;
    rounded.clamp(ceil_half(n), n - 1)
}

/// First index of the minimum; ties go to the earliest entry.
pub(crate) fn argmin_first(values: impl IntoIterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        match best {
            Some((_, bv)) if !(v < bv) => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

pub fn optimal_n1(n: usize, params: &MomentParams) -> Result<SplitPlan> {
    if n < 4 {
        return Err(Error::OutOfRange(format!("n must be >= 4, got {n}")));
    }
    params.validate()?;
    let p = params.with_n(n);
    let (a, b) = (p.a(), p.b());
    let lo = ceil_half(n);
    let curve: Vec<(usize, f64)> = (lo..n).map(|t| (t, approx_v_any(n, t, &p))).collect();
    let b_nonpositive = !(b > 0.0);
    let raw = if b_nonpositive {
        lo
    } else {
        theorem_n1(n, a, b)
    };
    let (n1_opt, v) = argmin_first(curve.iter().copied()).expect("non-empty grid");
    let method = if raw == n1_opt && !b_nonpositive {
        SplitMethod::ClosedForm
    } else {
        SplitMethod::GridArgmin
    };
    let c = approx_c(n, n1_opt, &p)?;
    Ok(SplitPlan {
        n,
        n1_opt,
        n2: n - n1_opt,
        v,
        c,
        rho_opt: c / v,
        method,
        theorem_n1: raw,
        b_nonpositive,
        curve,
    })
}

pub fn divisors(n: usize) -> Vec<usize> {
    (2..=n).filter(|k| n % k == 0).collect()
}

/// Smallest divisor of `n` greater than one.
pub fn min_divisor(n: usize) -> usize {
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return d;
        }
        d += 1;
    }
    n
}

pub fn kfold_variance(n: usize, k: usize, params: &MomentParams) -> Result<f64> {
    if k < 2 || k > n {
        return Err(Error::OutOfRange(format!(
            "need 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    if n % k != 0 {
        return Err(Error::NotDivisible { n, k });
    }
    let nf = n as f64;
    let kf = k as f64;
    Ok((params.alpha + params.beta) / nf
        + kf / (kf - 1.0) * (params.gamma + params.delta) / (nf * nf))
}

fn k_opt_rule(n: usize, params: &MomentParams) -> usize {
    if params.gamma + params.delta <= 0.0 {
        min_divisor(n)
    } else {
        n
    }
}

pub fn relative_efficiency_kfold(n: usize, k: usize, params: &MomentParams) -> Result<f64> {
    let v = kfold_variance(n, k, params)?;
    let reference = kfold_variance(n, k_opt_rule(n, params), params)?;
    Ok(v / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldPoint {
    pub k: usize,
    pub variance: f64,
    pub relative_efficiency: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k_opt: usize,
    pub curve: Vec<FoldPoint>,
}

impl FoldPlan {
    pub fn var_at(&self, k: usize) -> Option<f64> {
        self.curve.iter().find(|p| p.k == k).map(|p| p.variance)
    }

    pub fn relative_efficiency(&self, k: usize) -> Option<f64> {
        self.curve
            .iter()
            .find(|p| p.k == k)
            .map(|p| p.relative_efficiency)
    }
}

pub fn optimal_k(n: usize, params: &MomentParams) -> Result<FoldPlan> {
    if n < 4 {
        return Err(Error::OutOfRange(format!("n must be >= 4, got {n}")));
    }
    params.validate()?;
    let k_opt = k_opt_rule(n, params);
    let reference = kfold_variance(n, k_opt, params)?;
    let curve = divisors(n)
        .into_iter()
        .map(|k| {
            let variance = kfold_variance(n, k, params)?;
            Ok(FoldPoint {
                k,
                variance,
                relative_efficiency: variance / reference,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldPlan { n, k_opt, curve })
}
