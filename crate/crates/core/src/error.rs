use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid split geometry: {0}")]
    InvalidGeometry(String),
    #[error("enumeration budget exceeded: {pairs} subset pairs > {budget}")]
    BudgetExceeded { pairs: u128, budget: u128 },
    #[error("{k} does not divide {n}")]
    NotDivisible { n: usize, k: usize },
    #[error("input outside loss domain: {0}")]
    DomainError(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("q generator is not concave at {at}: q''={value}")]
    ConcavityViolation { at: f64, value: f64 },
    #[error("invalid rho {0}")]
    InvalidRho(f64),
    #[error("invalid pi {0}, expected 0 < pi < 1")]
    InvalidPi(f64),
    #[error("invalid r {0}, expected r > 0")]
    InvalidR(f64),
    #[error("invalid J {0}")]
    InvalidJ(usize),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid moment parameters: {0}")]
    InvalidParams(String),
    #[error("singular design matrix (condition estimate {0:.3e})")]
    SingularDesign(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("logistic fit diverged (perfect or quasi-perfect separation)")]
    Separation,
    #[error("response has no variation")]
    NoVariation,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Failures caused by the data's numerics rather than by bad arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign(_)
                | Error::Separation
                | Error::DegenerateSample(_)
                | Error::ConcavityViolation { .. }
                | Error::NoVariation
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
