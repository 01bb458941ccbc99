use thiserror::Error;

/// Failures raised by the discretization, solvers and experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid too coarse: n_per_side = {0}, need at least 9")]
    GridTooCoarse(usize),

    #[error("fields live on different grids ({0} vs {1} nodes per side)")]
    GridMismatch(usize, usize),

    #[error("node {0} is not a boundary node")]
    NotBoundaryNode(usize),

    #[error("linear solve failed: relative residual {achieved:.3e} above target {target:.3e}")]
    ResidualNotMet { achieved: f64, target: f64 },

    #[error("singular pivot at unknown {0}")]
    SingularPivot(usize),

    #[error("ellipticity lost at node {node} ({x:.4}, {y:.4}): sigma + q u = {value:.6e}")]
    EllipticityLost {
        node: usize,
        x: f64,
        y: f64,
        value: f64,
    },

    #[error("newton did not converge in {iterations} iterations; residual history {history:?}")]
    NewtonDiverged {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("finite-difference step {0} outside [1e-5, 1e-1]")]
    StepOutOfRange(f64),

    #[error("gauge generator violates trace conditions: max |phi| = {trace:.3e}, max |d_nu phi| = {normal:.3e} on the boundary")]
    TraceConditions { trace: f64, normal: f64 },

    #[error("q vanishes at node {0}")]
    VanishingQ(usize),

    #[error("zero direction vector")]
    ZeroDirection,

    #[error("non-positive frequency magnitude {0}")]
    BadTau(f64),

    #[error("grid does not resolve tau = {tau}: tau * h = {tau_h:.3} > 1.5")]
    Unresolved { tau: f64, tau_h: f64 },

    #[error("point ({0:.4}, {1:.4}) lies within 0.25 of the boundary")]
    TooCloseToBoundary(f64, f64),

    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
