use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: ParseError,
    },

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range (expected 0..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {0:?} has colliding coordinates")]
    Collision(Vec<f64>),

    #[error("cutoff region is not inside the domain: {0}")]
    CutoffOutsideDomain(String),

    #[error("non-finite sample on path {path}")]
    NonFiniteSample { path: u64 },

    #[error("all {0} paths were censored by the step cap")]
    AllCensoredByCap(usize),

    #[error("only {survivors} paths alive at probe time {time} (need at least {needed})")]
    TooFewSurvivors {
        time: f64,
        survivors: usize,
        needed: usize,
    },

    #[error("test function does not vanish on the quadrature boundary: {0}")]
    SupportLeak(String),

    #[error("function vanishes at {0:?}")]
    ZeroAtPoint(Vec<f64>),

    #[error("bracket basis exceeds {nodes} expression nodes at depth {depth}; lower the depth")]
    BasisTooLarge { depth: usize, nodes: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_expr(source: &str, n: usize, what: &str) -> Result<crate::expr::Expr> {
    crate::expr::parse(source, n).map_err(|source| Error::Parse {
        what: what.to_string(),
        source,
    })
}
