//! Error type shared by every module.
//!
//! Two families matter to callers: configuration/contract problems (bad
//! flags, malformed files, argument domain violations) and numeric failures
//! discovered mid-run (overflowing Euler steps, fully degenerate particle
//! weights). The CLI maps the former to exit code 2 and the latter to 3.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or argument value detected before any work ran.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numeric argument fell outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An evaluation was requested at a point where the quantity is singular.
    #[error("singular point: {0}")]
    Singular(String),

    /// An Euler state left the representable range (NaN or infinity).
    #[error("numeric overflow at level {level}, step {step}, unit time {unit_time}")]
    NumericOverflow {
        level: u32,
        step: usize,
        unit_time: u32,
    },

    /// Every particle weight underflowed to zero at the given unit time.
    #[error("degenerate particle weights at unit time {unit_time}")]
    DegenerateWeights { unit_time: u32 },

    /// A text file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A dataset violated a structural requirement (ordering, range, meta).
    #[error("dataset validation failed: {0}")]
    Validation(String),

    /// A reference value is too noisy for the comparison it was asked to serve.
    #[error("under-resolved reference: stderr {stderr:.3e} exceeds {bound:.3e}")]
    UnderResolvedReference { stderr: f64, bound: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that arise from the numerics of a run rather than
    /// from its configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericOverflow { .. } | Error::DegenerateWeights { .. } | Error::Singular(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
