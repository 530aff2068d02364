use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid probability {value} for outcome {outcome}")]
    InvalidProbability { outcome: String, value: f64 },

    #[error("distribution is not normalized (total mass {total})")]
    NotNormalized { total: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("structural equations contain a cycle through {0:?}")]
    Cycle(Vec<String>),

    #[error("missing exogenous assignment for {0}")]
    MissingExogenous(String),

    #[error("value {value:?} is not in the range of {variable}")]
    OutOfRange { variable: String, value: String },

    #[error("no table entry for {target} at inputs {inputs:?}")]
    TableMiss { target: String, inputs: Vec<String> },

    #[error("intervention {0} is not in the model's allowed interventions")]
    InterventionNotAllowed(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),

    #[error("empty step distribution")]
    EmptyRow,

    #[error("random number {0} outside [0, 1]")]
    RandomOutOfRange(f64),

    #[error("expected {expected} random numbers, got {got}")]
    RandomCount { expected: usize, got: usize },

    #[error("no conditional table row for prefix {0:?}")]
    MissingRow(Vec<String>),

    #[error("prompt of length {prompt_len} plus {output_len} output tokens exceeds context size {context_size}")]
    PromptTooLong {
        prompt_len: usize,
        output_len: usize,
        context_size: usize,
    },

    #[error("prompt distribution has no support: the simulator is off")]
    SimulatorOff,

    #[error("exact enumeration exceeded the node budget of {0}; use Monte Carlo mode")]
    NodeBudgetExceeded(u64),

    #[error("invalid observer: {0}")]
    InvalidObserver(String),

    #[error("no conditional distribution for {what} at {key}")]
    MissingConditional { what: &'static str, key: String },

    #[error("invalid check parameter: {0}")]
    InvalidParameter(String),

    #[error("turn {turn}: {source}")]
    Turn {
        turn: usize,
        #[source]
        source: Box<Error>,
    },
}
