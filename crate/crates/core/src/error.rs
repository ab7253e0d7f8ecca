use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDist(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("derivative vanishes at v = {0}")]
    SingularPoint(f64),
    #[error("degenerate benchmark: Π* = {seller}, U* = {buyer}")]
    DegenerateBenchmark { seller: f64, buyer: f64 },
    #[error("mixing weight {0} falls outside [0, 1]")]
    NoCrossing(f64),
    #[error("no sign change of the KS gap on the price grid")]
    NoFairPrice,
    #[error("filler point is on the wrong side of the KS line")]
    BadFiller,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular input: {0}")]
    SingularInput(&'static str),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded linear program")]
    Unbounded,
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("partition does not cover the domain: {0}")]
    PartitionGap(String),
}

pub type Result<T> = std::result::Result<T, Error>;
