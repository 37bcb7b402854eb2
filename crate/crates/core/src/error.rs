use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel parameters out of range: d = {d}, s = {s} (need d in {{1, 2}} and 0 <= s < d)")]
    KernelRange { d: usize, s: f64 },

    #[error("kernel evaluated at its singularity (|x| = {0:e})")]
    Singular(f64),

    #[error("no extension representation for the Coulomb case d = 2, s = 0")]
    NoExtension,

    #[error("quadrature did not converge: estimate {value:e} with error {error:e} (target {target:e})")]
    Quadrature { value: f64, error: f64, target: f64 },

    #[error("particles {i} and {j} coincide")]
    Coincident { i: usize, j: usize },

    #[error("invalid particle system: {0}")]
    InvalidSystem(String),

    #[error("step size underflow at t = {t} (h = {h:e}, min pair distance {min_distance:e})")]
    StepUnderflow { t: f64, h: f64, min_distance: f64 },

    #[error("invalid grid field: {0}")]
    InvalidField(String),

    #[error("density support reaches within {margin:.3} of the box boundary (need >= {required:.3})")]
    SupportTooClose { margin: f64, required: f64 },

    #[error("velocity blow-up: max |u| = {0}")]
    VelocityBlowUp(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("inadmissible truncation radius: {0}")]
    InadmissibleEta(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {0} is not covered by any ball")]
    Uncovered(usize),

    #[error("rejection sampling efficiency collapsed ({0:.4} < 0.01)")]
    SamplingEfficiency(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("N = {n}, t = {t}: {source}")]
    Experiment {
        n: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
