use alloc::string::String;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tilt outside the MGF domain: {0}")]
    Domain(String),
    #[error("no tilted sampler for this model family: {0}")]
    UnsupportedTilt(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("point not in the Cramér range: {0}")]
    NotInCramerRange(String),
    #[error("singular Hessian: {0}")]
    SingularHessian(String),
    #[error("no interior minimum for Λ(tv)/t: {0}")]
    NoInteriorMinimum(String),
    #[error("dual problem failed: {0}")]
    DualSolveFailed(String),
    #[error("constrained minimisation on the hyperplane failed: {0}")]
    ConstrainedSolveFailed(String),
    #[error("tangent frame is numerically singular: {0}")]
    SingularFrame(String),
    #[error("mean jump lies in the closed orthant, no large-deviation regime: {0}")]
    NoLargeDeviationRegime(String),
    #[error("vertex condition violated: {0}")]
    C3Violated(String),
    #[error("vertex condition holds only within the margin: {0}")]
    C3Marginal(String),
    #[error("second derivative of D_u is not positive: {0}")]
    NonPositiveCurvature(String),
    #[error("truncation radius exceeds budget: {0}")]
    TruncationBudgetExceeded(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid tilt: {0}")]
    InvalidTilt(String),
}

pub type Result<T> = core::result::Result<T, Error>;
