use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gain function not admissible: {0}")]
    Inadmissible(String),

    #[error("activity {value} of population {population} lies outside (0, 1); inverse gain undefined")]
    Boundary { population: usize, value: f64 },

    #[error("domain too large: {populations} populations exceeds cap {cap}")]
    DomainTooLarge { populations: usize, cap: usize },

    #[error("newton iteration failed after {iterations} steps, last residual {residual:e}")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("converged wave profile is not monotone (min increment {min_increment:e})")]
    NonMonotone { min_increment: f64 },

    #[error("wave speed {speed} must be strictly positive for this operation")]
    NonPositiveSpeed { speed: f64 },

    #[error("drift positivity violated: min -b = {min:e} at population {population}")]
    Positivity { min: f64, population: usize },

    #[error("boundary-vanishing condition fails at N = {n} for populations {offenders:?}")]
    BoundaryRates { n: u32, offenders: Vec<usize> },

    #[error("total jump rate {0:e} is not finite")]
    RateOverflow(f64),

    #[error("cholesky factorization failed at row {0}")]
    Factorization(usize),

    #[error("grid resolution mismatch: {0}")]
    Resolution(String),

    #[error("time step {dt} exceeds stability limit {dt_max}")]
    Cfl { dt: f64, dt_max: f64 },

    #[error("state left the admissible region: {0}")]
    StateExit(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
