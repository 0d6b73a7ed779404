use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Pareto, StudentT, Uniform};
use serde::Serialize;

use crate::error::{Error, Result};

/// Data distributions used by the simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family")]
pub enum DistSpec {
    Normal {
        mu: f64,
        sigma: f64,
    },
    /// `a == b` is a point mass.
    Uniform {
        a: f64,
        b: f64,
    },
    /// `X - shift` follows `t_ν`.
    StudentT {
        nu: f64,
        shift: f64,
    },
    Exponential {
        lambda: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// Density `a / x^(a+1)` on `x >= 1`.
    Pareto {
        a: f64,
    },
}

fn parse_args(rest: Option<&str>) -> Result<Vec<f64>> {
    match rest {
        None => Ok(Vec::new()),
        Some(r) => r
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad distribution parameter '{t}'")))
            })
            .collect(),
    }
}

impl DistSpec {
    /// Parses `family[:p1,p2]`, e.g. `normal:0,1`, `t:6,5`, `pareto:15`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (family, rest) = match s.split_once(':') {
            Some((f, r)) => (f.to_string(), Some(r)),
            None => (s.clone(), None),
        };
        let args = parse_args(rest)?;
        let get = |i: usize, default: Option<f64>| -> Result<f64> {
            args.get(i).copied().or(default).ok_or_else(|| {
                Error::InvalidConfig(format!("distribution '{s}' is missing parameter {}", i + 1))
            })
        };
        let d = match family.as_str() {
            "normal" | "n" => DistSpec::Normal {
                mu: get(0, Some(0.0))?,
                sigma: get(1, Some(1.0))?,
            },
            "uniform" | "u" => DistSpec::Uniform {
                a: get(0, Some(0.0))?,
                b: get(1, Some(1.0))?,
            },
            "t" | "studentt" => DistSpec::StudentT {
                nu: get(0, None)?,
                shift: get(1, Some(0.0))?,
            },
            "exp" | "exponential" => DistSpec::Exponential {
                lambda: get(0, Some(1.0))?,
            },
            "lognormal" | "lnorm" => DistSpec::LogNormal {
                mu: get(0, Some(0.0))?,
                sigma: get(1, Some(1.0))?,
            },
            "pareto" => DistSpec::Pareto { a: get(0, None)? },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown distribution '{other}' (normal|uniform|t|exp|lognormal|pareto)"
                )))
            }
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistSpec::Normal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            DistSpec::Uniform { a, b } => a.is_finite() && b.is_finite() && a <= b,
            DistSpec::StudentT { nu, shift } => nu > 0.0 && shift.is_finite(),
            DistSpec::Exponential { lambda } => lambda > 0.0 && lambda.is_finite(),
            DistSpec::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            DistSpec::Pareto { a } => a > 0.0 && a.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "invalid distribution {self:?}"
            )))
        }
    }

    pub fn label(&self) -> String {
        match *self {
            DistSpec::Normal { mu, sigma } => format!("N({mu},{})", sigma * sigma),
            DistSpec::Uniform { a, b } => format!("U({a},{b})"),
            DistSpec::StudentT { nu, shift } if shift == 0.0 => format!("t{nu}"),
            DistSpec::StudentT { nu, shift } => format!("t{nu}({shift})"),
            DistSpec::Exponential { lambda } => format!("exp({lambda})"),
            DistSpec::LogNormal { mu, sigma } if mu == 0.0 && sigma == 1.0 => "LogNormal".into(),
            DistSpec::LogNormal { mu, sigma } => format!("LogNormal({mu},{sigma})"),
            DistSpec::Pareto { a } => format!("Pareto({a})"),
        }
    }

    /// Moments of order strictly below this value are finite.
    pub fn moment_bound(&self) -> f64 {
        match *self {
            DistSpec::StudentT { nu, .. } => nu,
            DistSpec::Pareto { a } => a,
            _ => f64::INFINITY,
        }
    }

    /// A warning when moments up to `order` do not all exist.
    pub fn moment_warning(&self, order: u32) -> Option<String> {
        if self.moment_bound() <= order as f64 {
            Some(format!(
                "{} has finite moments only below order {}; {} are required",
                self.label(),
                self.moment_bound(),
                order
            ))
        } else {
            None
        }
    }

    pub fn mean(&self) -> Option<f64> {
        Some(match *self {
            DistSpec::Normal { mu, .. } => mu,
            DistSpec::Uniform { a, b } => 0.5 * (a + b),
            DistSpec::StudentT { nu, shift } if nu > 1.0 => shift,
            DistSpec::Exponential { lambda } => 1.0 / lambda,
            DistSpec::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            DistSpec::Pareto { a } if a > 1.0 => a / (a - 1.0),
            _ => return None,
        })
    }

    pub fn variance(&self) -> Option<f64> {
        Some(match *self {
            DistSpec::Normal { sigma, .. } => sigma * sigma,
            DistSpec::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            DistSpec::StudentT { nu, .. } if nu > 2.0 => nu / (nu - 2.0),
            DistSpec::Exponential { lambda } => 1.0 / (lambda * lambda),
            DistSpec::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (s2.exp() - 1.0) * (2.0 * mu + s2).exp()
            }
            DistSpec::Pareto { a } if a > 2.0 => a / ((a - 1.0) * (a - 1.0) * (a - 2.0)),
            _ => return None,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            DistSpec::Uniform { a, b } => (a, b),
            DistSpec::Exponential { .. } | DistSpec::LogNormal { .. } => (0.0, f64::INFINITY),
            DistSpec::Pareto { .. } => (1.0, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Density on the support; `None` for a point mass.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return Some(0.0);
        }
        Some(match *self {
            DistSpec::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            DistSpec::Uniform { a, b } if b > a => 1.0 / (b - a),
            DistSpec::Uniform { .. } => return None,
            DistSpec::StudentT { nu, shift } => {
                let t = x - shift;
                let ln_c =
                    libm::lgamma(0.5 * (nu + 1.0)) - libm::lgamma(0.5 * nu) - 0.5 * (nu * PI).ln();
                (ln_c - 0.5 * (nu + 1.0) * (1.0 + t * t / nu).ln()).exp()
            }
            DistSpec::Exponential { lambda } => lambda * (-lambda * x).exp(),
            DistSpec::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    return Some(0.0);
                }
                let z = (x.ln() - mu) / sigma;
                (-0.5 * z * z).exp() / (x * sigma * (2.0 * PI).sqrt())
            }
            DistSpec::Pareto { a } => a / x.powf(a + 1.0),
        })
    }

    /// Draws `n` values from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let bad = |e: &dyn std::fmt::Display| Error::InvalidParams(e.to_string());
        Ok(match *self {
            DistSpec::Normal { mu, sigma } => {
                let d = Normal::new(mu, sigma).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            DistSpec::Uniform { a, b } if a == b => vec![a; n],
            DistSpec::Uniform { a, b } => {
                let d = Uniform::new(a, b).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            DistSpec::StudentT { nu, shift } => {
                let d = StudentT::new(nu).map_err(|e| bad(&e))?;
                (0..n).map(|_| shift + d.sample(rng)).collect()
            }
            DistSpec::Exponential { lambda } => {
                let d = Exp::new(lambda).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            DistSpec::LogNormal { mu, sigma } => {
                let d = LogNormal::new(mu, sigma).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            DistSpec::Pareto { a } => {
                let d = Pareto::new(1.0, a).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
        })
    }
}
