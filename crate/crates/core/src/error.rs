use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("a bandit needs at least 2 arms, got {0}")]
    TooFewArms(usize),

    #[error("mean reward of arm {arm} is {value}, outside [0, 1]")]
    MeanOutOfRange { arm: usize, value: f64 },

    #[error("arm {arm} does not exist in a {arms}-armed bandit")]
    InvalidArm { arm: usize, arms: usize },

    #[error("rewards must be 0 or 1, got {0}")]
    InvalidReward(u8),

    #[error("{name} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("sampling distribution needs a non-empty queue")]
    EmptyQueue,

    #[error("horizon must be at least 1 slot")]
    ZeroHorizon,

    #[error("{policy} cannot be used as a network policy for {controller}")]
    UnsupportedPolicy {
        policy: String,
        controller: &'static str,
    },

    #[error("degenerate reference: max and min are both {0}")]
    DegenerateReference(f64),

    #[error("cannot summarize an empty batch")]
    EmptyBatch,

    #[error("batch mixes configurations: {0} vs {1}")]
    MixedConfigs(String, String),

    #[error("trace plays arm {arm} but only {arms} means are known")]
    ArmNotCovered { arm: usize, arms: usize },

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { name, value })
    }
}
