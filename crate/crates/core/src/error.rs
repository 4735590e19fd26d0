use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is singular (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("no stabilizing Riccati solution after {iterations} iterations (residual {residual:e})")]
    NoStabilizingSolution { iterations: usize, residual: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("QP stationarity {residual:e} above tolerance after {iterations} iterations")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("integration produced a non-finite state")]
    NonFiniteState,

    #[error("steering angle {0} rad outside (-pi/2, pi/2)")]
    SteeringOutOfRange(f64),

    #[error("slip angle {0} rad outside (-pi/2, pi/2)")]
    SlipOutOfRange(f64),

    #[error("pedal command {name}={value} outside [0, 1]")]
    ActionOutOfRange { name: &'static str, value: f64 },

    #[error("speed {speed:e} m/s below the decoupling floor {floor:e}")]
    SpeedTooLow { speed: f64, floor: f64 },

    #[error("episode diverged at step {step} (|xi| = {norm:e})")]
    EpisodeDiverged { step: usize, norm: f64 },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad model file {path}: {reason}")]
    ModelFile { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    /// Process exit code: 1 for infeasible or diverged runs, 2 for
    /// configuration problems and everything else that stops a command
    /// before it produces results.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_)
            | Error::EpisodeDiverged { .. }
            | Error::NoStabilizingSolution { .. }
            | Error::MaxIterations { .. }
            | Error::SpeedTooLow { .. }
            | Error::NonFiniteState
            | Error::NonFiniteLoss { .. } => 1,
            _ => 2,
        }
    }
}
