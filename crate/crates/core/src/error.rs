//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or configuration value violates a documented invariant.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The experiment configuration file could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// Fixed-point iteration (Riccati solve) failed to converge.
    #[error("fixed-point iteration did not converge within {max_iter} iterations (residual {residual:.3e})")]
    FixedPointDivergence { max_iter: usize, residual: f64 },

    /// Relative value iteration ran out of sweeps.
    #[error("relative value iteration did not converge within {max_sweeps} sweeps (final span {span:.3e})")]
    SolverNonConvergence { max_sweeps: usize, span: f64 },

    /// A Q-learning run produced non-finite values.
    #[error("learning diverged at step {step}: {detail}")]
    LearnerDivergence { step: u64, detail: String },

    /// The enumerated state space exceeds the configured budget.
    #[error("state space has {count} states, exceeding the budget of {budget}; shrink tau_limit or the number of sensors")]
    StateBudget { count: u128, budget: u64 },

    /// An action was applied in a state where it is not feasible.
    #[error("infeasible action: {0}")]
    InfeasibleAction(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
