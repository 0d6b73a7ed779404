//! Loss families for the sample-mean decision rule and plug-in estimation of
//! the moment parameters α, β, γ, δ.
//!
//! All derivatives are taken with respect to the decision `μ`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied concave generator with its first three derivatives.
#[derive(Clone)]
pub struct CustomQ {
    pub name: String,
    pub q: RealFn,
    pub q1: RealFn,
    pub q2: RealFn,
    pub q3: RealFn,
    pub domain: (f64, f64),
}

impl fmt::Debug for CustomQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomQ")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum QGenerator {
    /// q(t) = -t²; reproduces squared error.
    NegSquare,
    /// q(t) = -√(1+t²).
    SqrtOnePlusSquare,
    Custom(CustomQ),
}

impl QGenerator {
    pub fn name(&self) -> String {
        match self {
            QGenerator::NegSquare => "neg_square".into(),
            QGenerator::SqrtOnePlusSquare => "sqrt_one_plus_square".into(),
            QGenerator::Custom(c) => c.name.clone(),
        }
    }

    fn in_domain(&self, t: f64) -> bool {
        match self {
            QGenerator::Custom(c) => t >= c.domain.0 && t <= c.domain.1,
            _ => t.is_finite(),
        }
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.in_domain(t) {
            Ok(())
        } else {
            Err(Error::DomainError(format!(
                "{t} outside domain of {}",
                self.name()
            )))
        }
    }

    /// `[q, q', q'', q''']` at `t`.
    pub fn derivs(&self, t: f64) -> [f64; 4] {
        match self {
            QGenerator::NegSquare => [-t * t, -2.0 * t, -2.0, 0.0],
            QGenerator::SqrtOnePlusSquare => {
                let s = 1.0 + t * t;
                let r = s.sqrt();
                [-r, -t / r, -1.0 / (s * r), 3.0 * t / (s * s * r)]
            }
            QGenerator::Custom(c) => [(c.q)(t), (c.q1)(t), (c.q2)(t), (c.q3)(t)],
        }
    }
}

#[derive(Debug, Clone)]
pub enum LossSpec {
    Squared,
    QClass(QGenerator),
    /// `√((x-μ)² + d)`; `d = None` means `1/n` at estimation time.
    ApproxAbsolute {
        d: Option<f64>,
    },
    ModifiedSquared,
    DoubleSquared,
}

impl LossSpec {
    pub fn name(&self) -> String {
        match self {
            LossSpec::Squared => "squared".into(),
            LossSpec::QClass(QGenerator::SqrtOnePlusSquare) => "qsqrt".into(),
            LossSpec::QClass(g) => format!("qclass:{}", g.name()),
            LossSpec::ApproxAbsolute { .. } => "absapprox".into(),
            LossSpec::ModifiedSquared => "modsq".into(),
            LossSpec::DoubleSquared => "doublesq".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "squared" => Ok(LossSpec::Squared),
            "qsqrt" => Ok(LossSpec::QClass(QGenerator::SqrtOnePlusSquare)),
            "absapprox" => Ok(LossSpec::ApproxAbsolute { d: None }),
            "modsq" => Ok(LossSpec::ModifiedSquared),
            "doublesq" => Ok(LossSpec::DoubleSquared),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss '{other}' (expected squared|qsqrt|absapprox|modsq|doublesq)"
            ))),
        }
    }

    /// Fixes `d = 1/n` for the approximate absolute loss if unset.
    pub fn resolved(&self, n: usize) -> LossSpec {
        match self {
            LossSpec::ApproxAbsolute { d: None } => LossSpec::ApproxAbsolute {
                d: Some(1.0 / n as f64),
            },
            other => other.clone(),
        }
    }

    /// Moments of order up to this are needed for the variance formulas.
    pub fn moments_required(&self) -> u32 {
        match self {
            LossSpec::DoubleSquared => 8,
            _ => 6,
        }
    }
}

fn approx_d(d: &Option<f64>) -> Result<f64> {
    match d {
        Some(d) if *d > 0.0 => Ok(*d),
        Some(d) => Err(Error::DomainError(format!("d must be positive, got {d}"))),
        None => Err(Error::InvalidConfig(
            "approximate absolute loss needs d; call resolved(n) first".into(),
        )),
    }
}

pub fn loss_value(spec: &LossSpec, mu_hat: f64, y: f64) -> Result<f64> {
    Ok(derivatives(spec, mu_hat, y)?[0])
}

/// `[L, L', L'']` of the loss at decision `mu`, observation `x`.
pub fn derivatives(spec: &LossSpec, mu: f64, x: f64) -> Result<[f64; 3]> {
    let r = x - mu;
    Ok(match spec {
        LossSpec::Squared => [r * r, -2.0 * r, 2.0],
        LossSpec::QClass(g) => {
            g.check(mu)?;
            g.check(x)?;
            let [qm, q1, q2, q3] = g.derivs(mu);
            let qx = g.derivs(x)[0];
            [qm + q1 * r - qx, q2 * r, q3 * r - q2]
        }
        LossSpec::ApproxAbsolute { d } => {
            let d = approx_d(d)?;
            let s = r * r + d;
            let root = s.sqrt();
            [root, -r / root, d / (s * root)]
        }
        LossSpec::ModifiedSquared => [r * r + mu * mu, 4.0 * mu - 2.0 * x, 4.0],
        LossSpec::DoubleSquared => {
            let w = x * x - mu * mu;
            [w * w, -4.0 * mu * w, -4.0 * w + 8.0 * mu * mu]
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub sigma2: Option<f64>,
    pub mu: Option<f64>,
    pub n: usize,
}

impl MomentParams {
    /// Parameters given directly, without an underlying sample.
    pub fn theoretical(alpha: f64, beta: f64, gamma: f64, delta: f64, n: usize) -> Result<Self> {
        let p = MomentParams {
            alpha,
            beta,
            gamma,
            delta,
            sigma2: None,
            mu: None,
            n,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.delta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite moment parameter".into()));
        }
        if self.alpha < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "alpha and gamma must be >= 0, got alpha={}, gamma={}",
                self.alpha, self.gamma
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidParams(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn a(&self) -> f64 {
        self.alpha + (self.gamma + self.delta) / self.n as f64
    }

    pub fn b(&self) -> f64 {
        self.beta + (self.gamma + self.delta) / self.n as f64
    }
}

fn check_sample(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.len() < 4 {
        return Err(Error::DegenerateSample(format!(
            "need at least 4 observations, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::DomainError(
            "sample contains non-finite values".into(),
        ));
    }
    let mu = stats::mean(sample);
    let s2 = stats::var(sample);
    if !(s2 > 0.0) {
        return Err(Error::DegenerateSample("sample variance is zero".into()));
    }
    Ok((mu, s2))
}

/// Errors if q'' > 0 anywhere among the given points.
pub fn check_concavity(g: &QGenerator, points: impl IntoIterator<Item = f64>) -> Result<()> {
    for t in points {
        let q2 = g.derivs(t)[2];
        if q2 > 1e-12 {
            return Err(Error::ConcavityViolation { at: t, value: q2 });
        }
    }
    Ok(())
}

/// Plug-in α̂, β̂, γ̂, δ̂ from a sample.
pub fn estimate_moment_params(spec: &LossSpec, sample: &[f64]) -> Result<MomentParams> {
    let (mu, s2) = check_sample(sample)?;
    let n = sample.len();
    if let LossSpec::QClass(g) = spec {
        for &x in sample {
            g.check(x)?;
        }
        check_concavity(g, sample.iter().copied().chain(std::iter::once(mu)))?;
        let qx: Vec<f64> = sample.iter().map(|&x| g.derivs(x)[0]).collect();
        let var_q = stats::var(&qx);
        let cov_xq = stats::cov(sample, &qx);
        let mut p = qclass_population_params(g, mu, s2, var_q, cov_xq)?;
        p.n = n;
        return Ok(p);
    }
    let spec = spec.resolved(n);
    let mut l = Vec::with_capacity(n);
    let mut l1 = Vec::with_capacity(n);
    let mut l2 = Vec::with_capacity(n);
    for &x in sample {
        let [a, b, c] = derivatives(&spec, mu, x)?;
        l.push(a);
        l1.push(b);
        l2.push(c);
    }
    let m1 = stats::mean(&l1);
    let mut alpha = s2 * m1 * m1;
    let mut delta = s2 * stats::cov(&l, &l2);
    if matches!(spec, LossSpec::Squared) {
        // L' averages to zero at the sample mean and L'' is constant
        alpha = 0.0;
        delta = 0.0;
    }
    Ok(MomentParams {
        alpha,
        beta: stats::var(&l),
        gamma: s2 * stats::var(&l1),
        delta,
        sigma2: Some(s2),
        mu: Some(mu),
        n,
    })
}

/// Closed-form parameters of a q-class loss from the moments of X and q(X).
pub fn qclass_population_params(
    g: &QGenerator,
    mu: f64,
    sigma2: f64,
    var_q: f64,
    cov_x_q: f64,
) -> Result<MomentParams> {
    let [_, q1, q2, q3] = g.derivs(mu);
    if ![q1, q2, q3].iter().all(|v| v.is_finite()) {
        return Err(Error::DomainError(format!("q not differentiable at {mu}")));
    }
    let s4 = sigma2 * sigma2;
    Ok(MomentParams {
        alpha: 0.0,
        beta: q1 * q1 * sigma2 + var_q - 2.0 * q1 * cov_x_q,
        gamma: q2 * q2 * s4,
        delta: q1 * q3 * s4 - q3 * cov_x_q * sigma2,
        sigma2: Some(sigma2),
        mu: Some(mu),
        n: 0,
    })
}
