use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible kinematics: entry speed {speed} m/s with acceleration {accel} m/s² stops before covering {length} m")]
    InfeasibleKinematics { speed: f64, accel: f64, length: f64 },

    #[error("degenerate segment: entry and exit speeds are both zero")]
    DegenerateSegment,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("no grid point satisfies the trip-time tolerance")]
    NoFeasiblePoint,

    #[error("time budget exhausted: {remaining_s} s left for {remaining_m} m")]
    BudgetExhausted { remaining_s: f64, remaining_m: f64 },

    #[error("collision: gap to the preceding vehicle would be {gap_m} m")]
    Collision { gap_m: f64 },

    #[error("state of charge {soc} left [0, 1]")]
    SocOutOfRange { soc: f64 },

    #[error("cycle statistics undefined: no charge processed")]
    UndefinedStats,

    #[error("range exceeded: {0}")]
    RangeExceeded(String),

    #[error("road profile: {0}")]
    Road(String),

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
