use banditpde::lattice::LatticeError;
use banditpde::mc_sim::SimError;
use banditpde::minimax::MinimaxError;
use banditpde::policies::PolicyError;
use banditpde::SolveError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::Io(io) => CliError::Io(io),
            LatticeError::NonFinite(_) | LatticeError::NotConverged { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidProblem(_) | SolveError::UnsupportedPolicy(_) | SolveError::Belief(_) => {
                CliError::Config(e.to_string())
            }
            SolveError::Lattice(l) => l.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Policy(p) => p.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<MinimaxError> for CliError {
    fn from(e: MinimaxError) -> Self {
        match e {
            MinimaxError::Solve(s) => s.into(),
            MinimaxError::Sim(s) => s.into(),
            MinimaxError::InvalidState(_) | MinimaxError::Belief(_) | MinimaxError::Policy(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}
