use thiserror::Error;

/// Errors raised by the geometric and variational routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("unknown chart specifier `{0}`")]
    UnknownChart(String),
    #[error("unknown map family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("deformation `{deform}` needs contact data, chart `{chart}` has none")]
    MissingContactData { chart: String, deform: String },
    #[error("deformation function vanishes at {point:?}")]
    VanishingDeformation { point: Vec<f64> },
    #[error("point {point:?} lies within {margin:e} of the singular locus of `{chart}`")]
    NearSingularLocus { chart: String, point: Vec<f64>, margin: f64 },
    #[error("Ricci tensor is not catalogued for chart `{0}`")]
    RicciUnavailable(String),
    #[error("profile violates boundary conditions: {0}")]
    BoundaryConditions(String),
    #[error("analytic Jacobian of `{family}` disagrees with finite differences at {point:?} (relative error {error:e})")]
    JacobianSelfTest { family: String, point: Vec<f64>, error: f64 },
    #[error("non-finite value in {what} at {point:?}")]
    NonFinite { what: String, point: Vec<f64> },
    #[error("map is not submersive at {point:?} (smallest horizontal eigenvalue {value:e})")]
    RankDrop { point: Vec<f64>, value: f64 },
    #[error("spectrum predicate `{predicate}` fails at {point:?} (deviation {deviation:e})")]
    PredicateFailed { predicate: String, point: Vec<f64>, deviation: f64 },
    #[error("degree refused: {0}")]
    NonCompact(String),
    #[error("Hopf potential check failed: |dA - pullback(Omega)| = {deviation:e} at {point:?}")]
    PotentialMismatch { point: Vec<f64>, deviation: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("specifier parse error: {0}")]
    Parse(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
