use thiserror::Error;

/// Errors raised by the library. Schedule-validation failures are report
/// content, not errors, except when a strict run refuses to start.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("time index {t} is outside the loss family horizon {horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },

    #[error("agent index {index} out of range for {agents} agents")]
    AgentOutOfRange { index: usize, agents: usize },

    #[error("weight construction failed: {0}")]
    Construction(String),

    #[error("communication schedule violates its declared assumptions: {0}")]
    ScheduleInvalid(String),

    #[error("non-finite {quantity} at round {round}, agent {agent}")]
    NonFinite {
        round: usize,
        agent: usize,
        quantity: &'static str,
    },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            got,
            context,
        })
    }
}
