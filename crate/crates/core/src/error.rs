use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A non-finite intermediate appeared; carries the offending inputs.
    #[error("non-finite value in {context} (inputs: {inputs:?})")]
    Numerical {
        context: &'static str,
        inputs: Vec<f64>,
    },

    #[error("{what} outside of support: {value:?}")]
    Domain { what: &'static str, value: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampled level exceeded the safety cap of {cap}")]
    LevelCap { cap: u32 },
}

impl Error {
    /// Stable machine-readable category used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "contract",
            Error::Numerical { .. } => "numerical",
            Error::Domain { .. } => "domain",
            Error::Config(_) => "config",
            Error::LevelCap { .. } => "level-cap",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
