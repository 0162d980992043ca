use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid parameter `{path}`: {reason}")]
    InvalidParameter { path: String, reason: String },

    #[error("pulse window {index} out of range (field holds {available} pulses)")]
    WindowOutOfRange { index: usize, available: usize },

    #[error("sample grid mismatch: {0}")]
    GridMismatch(String),

    #[error("integration step {dt:e} s exceeds stability bound {bound:e} s")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("laser rate equations diverged at step {step}")]
    Diverged { step: usize },

    #[error("steady-state solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unreachable extinction ratio {target_db} dB: {reason}")]
    UnreachableExtinction { target_db: f64, reason: String },

    #[error("cannot reach target mean photon number {target} from input {input} (VOA cannot amplify)")]
    CannotAmplify { target: f64, input: f64 },

    #[error("non-finite field after fiber segment {segment}")]
    NonFiniteField { segment: usize },

    #[error("delay of {delay:e} s is not an integer number of samples at {sample_rate:e} Sa/s")]
    NonIntegerDelay { delay: f64, sample_rate: f64 },

    #[error("probability or ratio out of range: {0}")]
    OutOfRange(String),

    #[error("empty key")]
    EmptyKey,

    #[error("event at slot {slot} outside the encoded record of {pulses} pulses")]
    EventOutOfRange { slot: u64, pulses: usize },

    #[error("field too short: {len} samples, need at least {needed}")]
    FieldTooShort { len: usize, needed: usize },

    #[error("zero total power")]
    ZeroPower,

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_block(self, block: usize) -> Self {
        Error::Block {
            block,
            source: Box::new(self),
        }
    }
}
