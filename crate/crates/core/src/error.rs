use thiserror::Error;

use crate::mesh::MeshError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate triangle with side lengths ({a}, {b}, {c})")]
    DegenerateTriangle { a: f64, b: f64, c: f64 },

    #[error("degenerate auxiliary triangle: cosine {cosine} outside [-1, 1] (circles do not intersect)")]
    DegenerateAuxiliary { cosine: f64 },

    #[error("arccos argument {value} overshoots [-1, 1] beyond tolerance")]
    CosineOvershoot { value: f64 },

    #[error("half weight {value} outside (0, sqrt 3) in face {face} for edge ({i}, {j})")]
    HalfWeightOutOfBounds {
        face: usize,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },

    #[error("step collapsed after {halvings} halvings at t = {t}")]
    StepCollapse { halvings: usize, t: f64 },

    #[error("quadrature did not converge with {panels} panels (error estimate {estimate:e})")]
    QuadratureNoConvergence { panels: usize, estimate: f64 },

    #[error("no constant-curvature metric: calabi flow ended with status {status}")]
    NoConstantCurvature { status: String },

    #[error("refusing exponential enumeration of 2^{n} subsets (limit N = {limit}); enable the override to proceed")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}
