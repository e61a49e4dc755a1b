use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("at least three agents are required, got {0}")]
    TooFewAgents(usize),

    #[error("at most {max} agents are supported, got {got}")]
    TooManyAgents { got: usize, max: usize },

    #[error("agent `{agent}` is outside the configured {n} agents")]
    AgentOutOfRange { agent: String, n: usize },

    #[error("agent `{0}` cannot call itself")]
    SelfCall(String),

    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("call `{call}` uses a different direction than the model's {expected}")]
    DirectionMismatch { call: String, expected: String },

    #[error("sequence `{0}` is not in the bounded universe")]
    NotInUniverse(String),

    #[error("pair budget exceeded: {pairs} pairs requested, budget is {budget}")]
    BudgetExceeded { pairs: u128, budget: u128 },

    #[error("invalid guard `{guard}`: {reason}")]
    InvalidGuard { guard: String, reason: String },

    #[error("guard `{0}` is not expressible in the existential fragment")]
    NotExistential(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("protocol file line {line}: {msg}")]
    ProtocolFile { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
