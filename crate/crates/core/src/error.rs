use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sigma = {0} must exceed 1/2")]
    SigmaOutOfRange(f64),

    #[error("local roots unavailable for p = {p} (coverage ends at {coverage})")]
    RootsUnavailable { p: u64, coverage: u64 },

    #[error("prime table covers only up to {limit}, requested {requested}")]
    Coverage { limit: u64, requested: u64 },

    #[error("expansion inapplicable: |z| * sum|c_m| = {smallness:.4} exceeds {threshold}")]
    ExpansionInapplicable { smallness: f64, threshold: f64 },

    #[error("quadrature needs at least {required} points, got {points}")]
    QuadratureTooCoarse { points: usize, required: usize },

    #[error("tail certificate {tail_cert:e} exceeds tolerance {tol:e}; need p_max >= {required_p_max}")]
    TailTooLarge {
        tail_cert: f64,
        tol: f64,
        required_p_max: u64,
    },

    #[error("characteristic function has not decayed at the box boundary: max |value| = {max_boundary:e} > {threshold:e}")]
    BoundaryDecay { max_boundary: f64, threshold: f64 },

    #[error("rectangle [{x0}, {x1}] x [{y0}, {y1}] exceeds grid extent {extent:?}")]
    ExtentViolation {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        extent: (f64, f64),
    },

    #[error("spec metadata lacks {0}")]
    MissingMetadata(&'static str),

    #[error("schedule hypothesis violated: delta + 3 theta = {0} must be < 1/2")]
    ScheduleHypothesis(f64),

    #[error("empty sample cloud")]
    EmptyCloud,

    #[error("decay fit needs at least 8 samples beyond the fit start, found {0}")]
    TooFewFitPoints(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.5 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::SigmaOutOfRange(sigma))
    }
}
