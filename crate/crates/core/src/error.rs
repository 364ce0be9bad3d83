use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular fit at polynomial order {order}: {detail}")]
    SingularFit { order: usize, detail: String },

    #[error("defective linear part: eigenvector matrix condition number {condition:.3e}")]
    DefectiveLinearPart { condition: f64 },

    #[error("too few samples below amplitude cutoff {cutoff}: have {have}, need {need}; increase the cutoff")]
    TooFewSamples { cutoff: f64, have: usize, need: usize },

    #[error("optimizer did not converge after {iterations} iterations (best cost {cost:.6e})")]
    NotConverged {
        iterations: usize,
        cost: f64,
        best: Vec<f64>,
    },

    #[error("outer resonance at row {row}, monomial {monomial}, order {order}: denominator {denominator:.3e}")]
    Resonance {
        row: usize,
        monomial: usize,
        order: usize,
        denominator: f64,
    },

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("spectral quotient undefined: {0}")]
    UndefinedQuotient(String),

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
