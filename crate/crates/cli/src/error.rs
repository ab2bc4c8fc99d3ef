use std::fmt;

use psomdp::bnb::BnbError;
use psomdp::bounds::BoundsError;
use psomdp::compose::ComposeError;
use psomdp::domains::DomainError;
use psomdp::model::ModelError;
use psomdp::solver::SolverError;

/// Exit-code contract: 0 ok, 1 input error, 2 solve failure, 3 property not
/// exhibited.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Solve(String),
    NotExhibited(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Solve(_) => 2,
            CliError::NotExhibited(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> CliError {
        CliError::Input(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Solve(m) | CliError::NotExhibited(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<DomainError> for CliError {
    fn from(err: DomainError) -> CliError {
        CliError::Input(err.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> CliError {
        CliError::Input(err.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(err: SolverError) -> CliError {
        CliError::Solve(err.to_string())
    }
}

impl From<ComposeError> for CliError {
    fn from(err: ComposeError) -> CliError {
        CliError::Solve(err.to_string())
    }
}

impl From<BoundsError> for CliError {
    fn from(err: BoundsError) -> CliError {
        match err {
            BoundsError::Solver(inner) => inner.into(),
            BoundsError::Compose(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<BnbError> for CliError {
    fn from(err: BnbError) -> CliError {
        match err {
            BnbError::Solver(inner) => inner.into(),
            BnbError::Compose(inner) => inner.into(),
            BnbError::Bounds(inner) => inner.into(),
            other => CliError::Solve(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        CliError::Input(err.to_string())
    }
}
