use std::fmt;

use serde::{Deserialize, Serialize};

/// Constraints of the team-size / team-count optimization, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    TeamBudget,
    FalseAlarm,
    Detection,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::TeamBudget => "team-budget",
            Constraint::FalseAlarm => "false-alarm",
            Constraint::Detection => "detection",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rate chain has no unique stationary distribution: {0}")]
    DegenerateChain(String),

    #[error("target detection probability {0} is unattainable (must lie strictly inside (0, 1))")]
    UnattainableTarget(f64),

    #[error("requested {requested} cooperators but only {available} candidates are available")]
    InsufficientCandidates { requested: usize, available: usize },

    #[error("queue is unstable: load rho = {0} (must be < 1)")]
    UnstableQueue(f64),

    #[error("no feasible (U, q) configuration: the {0} constraint removes every grid point")]
    NoFeasibleConfiguration(Constraint),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Fails unless `value` is a finite probability in `[0, 1]`.
pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(invalid(name, format!("{value} is not a probability")))
    }
}
