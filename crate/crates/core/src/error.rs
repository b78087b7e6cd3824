//! Error type shared across the estimation modules.

use std::fmt;

/// Errors raised by the group operations, filters, smoothers and solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The rotation angle is within the exclusion band around pi where the
    /// logarithm's axis extraction is ill-conditioned.
    NearPiRotation { angle: f64 },
    /// A matrix handed to `vee` has nonzero entries outside the algebra
    /// sparsity pattern.
    MalformedAlgebraElement { max_violation: f64 },
    /// A 9x9 matrix does not have the group embedding structure.
    MalformedEmbedding { reason: String },
    /// Landmark index not present in the map.
    UnknownLandmark { id: usize, map_len: usize },
    /// A covariance failed the positive-semidefiniteness check.
    NonPsdCovariance { context: &'static str },
    /// The innovation covariance S = H P Ht + M R Mt could not be factorized.
    SingularInnovationCovariance,
    /// A predicted covariance in the backward pass could not be inverted.
    SingularPredictedCovariance { step: usize },
    /// The Gauss-Newton normal equations are rank deficient.
    SingularNormalEquations { block: usize },
    /// A belief with the wrong error convention was passed to a correction.
    ConventionMismatch {
        expected: &'static str,
        found: &'static str,
    },
    /// Two trajectories that must share a length do not.
    LengthMismatch { expected: usize, actual: usize },
    /// A measurement timestamp falls outside the interoceptive stream.
    MeasurementOutOfRange { t: f64 },
    /// Failure during a filter or smoother sweep, tagged with the step index.
    Step { step: usize, source: Box<Error> },
    /// Invalid scenario or noise configuration.
    InvalidScenario(String),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NearPiRotation { angle } => {
                write!(f, "rotation angle {angle} is too close to pi for a stable logarithm")
            }
            Error::MalformedAlgebraElement { max_violation } => write!(
                f,
                "matrix violates the Lie algebra sparsity pattern (max off-pattern entry {max_violation:e})"
            ),
            Error::MalformedEmbedding { reason } => {
                write!(f, "matrix is not a valid group embedding: {reason}")
            }
            Error::UnknownLandmark { id, map_len } => {
                write!(f, "landmark id {id} not in map of {map_len} landmarks")
            }
            Error::NonPsdCovariance { context } => {
                write!(f, "covariance is not positive semidefinite ({context})")
            }
            Error::SingularInnovationCovariance => {
                write!(f, "innovation covariance is singular")
            }
            Error::SingularPredictedCovariance { step } => {
                write!(f, "predicted covariance at step {step} is singular")
            }
            Error::SingularNormalEquations { block } => {
                write!(f, "normal equations are singular at block {block}")
            }
            Error::ConventionMismatch { expected, found } => {
                write!(f, "expected a {expected} belief, found {found}")
            }
            Error::LengthMismatch { expected, actual } => {
                write!(f, "length mismatch: expected {expected}, got {actual}")
            }
            Error::MeasurementOutOfRange { t } => {
                write!(f, "measurement at t = {t} s lies outside the interoceptive stream")
            }
            Error::Step { step, source } => write!(f, "step {step}: {source}"),
            Error::InvalidScenario(reason) => write!(f, "invalid scenario: {reason}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Step { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
