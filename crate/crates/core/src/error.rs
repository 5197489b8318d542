use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vehicle {0} already has an offload in flight")]
    VehicleBusy(usize),

    #[error("unknown vehicle {0}")]
    UnknownVehicle(usize),

    #[error("split ratio {0} is outside [0, 1]")]
    InvalidSplit(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("gradient tape was recorded against different parameters")]
    StaleTape,

    #[error("empty transition batch")]
    EmptyBatch,

    #[error("non-finite value in policy update: {0}")]
    NonFiniteLoss(String),

    #[error("simulator stalled: no offload completed for {0} ticks")]
    Stalled(u64),

    #[error("GPR dataset is empty")]
    EmptyDataset,

    #[error("GPR covariance system is singular (duplicate inputs with zero noise?)")]
    SingularSystem,

    #[error("non-finite reservation gradient {0:?}")]
    NonFiniteGradient([f64; 3]),

    #[error("reservation window contains no completed offload")]
    EmptyWindow,

    #[error("latency bound infeasible: l_H = {l_h:.1} ms > {l_max:.1} ms even at full reservation")]
    Infeasible { l_h: f64, l_max: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
