use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter bundle or coefficient description is malformed.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The parameters parse but violate one or more standing assumptions.
    #[error("model assumptions violated: {}", .0.join(", "))]
    AssumptionsViolated(Vec<String>),

    /// The threshold number is too close to one to decide persistence.
    #[error("threshold number {threshold} is within {band:e} of 1; persistence is indeterminate")]
    Indeterminate { threshold: f64, band: f64 },

    /// A spreading speed was requested for a population that goes extinct.
    #[error("threshold number {threshold} <= 1: the spreading speed is undefined")]
    NoPersistence { threshold: f64 },

    /// A bracketing search failed to enclose a root or minimum.
    #[error("bracketing failed: {0}")]
    Bracket(String),

    /// An iterative solver did not reach its tolerance.
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    /// Simulated fronts came too close to the edge of the periodic domain.
    #[error("boundary contamination from year {year}: front at {front:.3} with edge margin {margin:.3}")]
    BoundaryContamination { year: usize, front: f64, margin: f64 },

    /// Not enough data for an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
