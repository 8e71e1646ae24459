use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("enumeration budget exceeded: {needed} words requested, budget is {budget}")]
    Budget { needed: u128, budget: u64 },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("point description does not cover coordinate {0}")]
    InsufficientWindow(i64),
    #[error("degenerate scale 2^-{0}: the ball is the whole space")]
    DegenerateScale(u32),
    #[error("segment outside decomposition domain: {0}")]
    Domain(String),
    #[error("no admissible connector of length <= {max_len} from {from:?} to {to:?}")]
    NoConnector { from: Vec<u8>, to: Vec<u8>, max_len: usize },
    #[error("transition matrix is reducible")]
    Reducible,
    #[error("scale ladder violation: {0}")]
    ScaleLadder(String),
    #[error("constraint set is infeasible")]
    Infeasible,
    #[error("root bracketing failed: {0}")]
    Bracketing(String),
    #[error("depth mismatch: {0}")]
    Depth(String),
    #[error("flow horizon exceeded: |t| = {t} > {horizon}")]
    Horizon { t: f64, horizon: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
