use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    /// A parameter is outside its allowed range (non-positive, negative or not finite).
    NonPositiveParameter(String),
    DimensionMismatch(String),
    /// The config text could not be parsed.
    Parse(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::NonPositiveParameter(field) => write!(f, "parameter out of range: {field}"),
            ConfigError::DimensionMismatch(what) => write!(f, "dimension mismatch: {what}"),
            ConfigError::Parse(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    Config(Vec<ConfigError>),

    #[error("transmit power iteration did not converge after {rounds} rounds (max power {max_power:e} W)")]
    NoConvergence { rounds: usize, max_power: f64 },

    #[error("device {device}: offload rates sum to {row_sum} > task rate {lambda}")]
    RowSumExceedsLambda { device: usize, row_sum: f64, lambda: f64 },

    #[error("singular point: denominator {denominator:e} at server {server}")]
    SingularPoint { server: usize, denominator: f64 },

    #[error("polynomial has no nonzero coefficient")]
    ZeroPolynomial,

    #[error("device {device}: no feasible allocation for total offload {t}")]
    Infeasible { device: usize, t: f64 },

    #[error("grid resolution {resolution} is too coarse for task rate {lambda}")]
    ResolutionTooCoarse { resolution: f64, lambda: f64 },

    #[error("initial profile is infeasible for device {device}: {reason}")]
    InfeasibleInitial { device: usize, reason: String },

    #[error("server {server} is unstable (utilization {utilization})")]
    UnstableSystem { server: usize, utilization: f64 },

    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn join(errs: &[ConfigError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}
