use thiserror::Error;

pub type Result<T> = std::result::Result<T, RgError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RgError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("negative discriminant inverting the backbone map at y = {y}")]
    DiscriminantNegative { y: f64 },
    #[error("y = {y} is not below the nontrivial fixed point {g_star}")]
    OutOfBasin { y: f64, g_star: f64 },
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("sampled Lipschitz constant {observed} exceeds budget {budget}")]
    BudgetExceeded { observed: f64, budget: f64 },
    #[error("omega0 = {0} outside (0, 1/2)")]
    OmegaOutOfDomain(f64),
    #[error("linear coefficient {value} at n = {n} is too close to zero")]
    SingularLinearization { n: i64, value: f64 },
    #[error("contraction ratio >= 1 for 3 consecutive sweeps (last {0})")]
    NoContraction(f64),
    #[error("no convergence after {iters} iterations (last change {last_change})")]
    MaxItersExceeded { iters: usize, last_change: f64 },
    #[error("Newton iteration diverged (residual {0})")]
    NewtonDiverged(f64),
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("eigen solver did not converge: {0}")]
    NoConvergence(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("eigenvalue of modulus {0} is marginal")]
    MarginalEigenvalue(f64),
    #[error("unstable potential: leading coefficient {0} <= 0")]
    UnstablePotential(f64),
    #[error("quadrature overflow evaluating the potential")]
    QuadratureOverflow,
    #[error("bracket endpoints both escape to the {0} regime")]
    BracketInvalid(String),
}

impl RgError {
    /// Stable machine-readable name of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            RgError::InvalidParams(_) => "InvalidParams",
            RgError::DiscriminantNegative { .. } => "DiscriminantNegative",
            RgError::OutOfBasin { .. } => "OutOfBasin",
            RgError::NonFinite(_) => "NonFinite",
            RgError::BudgetExceeded { .. } => "BudgetExceeded",
            RgError::OmegaOutOfDomain(_) => "OmegaOutOfDomain",
            RgError::SingularLinearization { .. } => "SingularLinearization",
            RgError::NoContraction(_) => "NoContraction",
            RgError::MaxItersExceeded { .. } => "MaxItersExceeded",
            RgError::NewtonDiverged(_) => "NewtonDiverged",
            RgError::SingularJacobian => "SingularJacobian",
            RgError::NoConvergence(_) => "NoConvergence",
            RgError::DegenerateSpectrum(_) => "DegenerateSpectrum",
            RgError::MarginalEigenvalue(_) => "MarginalEigenvalue",
            RgError::UnstablePotential(_) => "UnstablePotential",
            RgError::QuadratureOverflow => "QuadratureOverflow",
            RgError::BracketInvalid(_) => "BracketInvalid",
        }
    }

    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            RgError::InvalidParams(_) | RgError::OmegaOutOfDomain(_) | RgError::BudgetExceeded { .. }
        )
    }
}
