use thiserror::Error;

/// Errors raised by the geometric kernels and the Monte Carlo drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix entries not finite or overflowed: {0}")]
    Overflow(String),

    #[error("determinant {det} is not within tolerance of 1")]
    Determinant { det: f64 },

    #[error("point is not in the upper half-plane: {0}")]
    HalfPlane(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("lattice reduction did not terminate after {swaps} swaps")]
    ReductionStalled { swaps: usize },

    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("delaunay flip loop exceeded {flips} flips")]
    FlipLoop { flips: usize },

    #[error("saddle connection frontier exceeded {cap} triangles")]
    FrontierCap { cap: usize },

    #[error("unknown surface `{0}`")]
    UnknownSurface(String),

    #[error("surface parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("rejection sampler exceeded {0} retries")]
    RejectionCap(usize),

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("no contraction horizon found up to m = {m_max}")]
    HorizonNotFound { m_max: usize },

    #[error("noise floor reached before fit window (last usable n = {last_usable})")]
    NoiseFloor { last_usable: usize },

    #[error("alpha^(1/2) = {alpha_sqrt:.4} is below the measured decay rho = {rho:.4}")]
    AlphaBelowDecay { alpha_sqrt: f64, rho: f64 },

    #[error("chains disagree: max inter-chain distance {distance:.4} > {threshold}")]
    ChainsDisagree { distance: f64, threshold: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
