use ldhit_core::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Regime(String),
    #[error("{0}")]
    Fit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Regime(_) => 4,
            CliError::Fit(_) => 5,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_)
            | Error::Domain(_)
            | Error::UnsupportedTilt(_)
            | Error::InvalidTilt(_) => CliError::Config(msg),
            Error::NotInCramerRange(_)
            | Error::SingularHessian(_)
            | Error::NoInteriorMinimum(_)
            | Error::DualSolveFailed(_)
            | Error::ConstrainedSolveFailed(_)
            | Error::SingularFrame(_)
            | Error::NonPositiveCurvature(_)
            | Error::TruncationBudgetExceeded(_) => CliError::Solver(msg),
            Error::NoLargeDeviationRegime(_) | Error::C3Violated(_) | Error::C3Marginal(_) => {
                CliError::Regime(msg)
            }
            Error::DegenerateFit(_) => CliError::Fit(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}
