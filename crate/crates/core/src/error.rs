//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, numeric kernels, and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// A model or parameter set violated a structural invariant.
    #[error("invalid parameter {what}: {msg}")]
    InvalidParameter { what: &'static str, msg: String },

    /// All class centroids coincide, so no threshold carries information.
    #[error("degenerate centroids: average discriminant gain is zero")]
    DegenerateCentroids,

    /// The symmetric eigensolver did not converge.
    #[error("eigendecomposition failed to converge")]
    EigenFailure,

    /// Feature fusion was requested for an empty reception set.
    #[error("cannot fuse an empty feature set")]
    EmptyFeatureSet,

    /// A transmitter degree exceeds the number of uplink slots.
    #[error("degree {degree} exceeds frame size of {slots} slots")]
    DegreeExceedsSlots { degree: usize, slots: usize },

    /// Error-floor constants are inconsistent with the frame configuration.
    #[error("IRSA constants mismatch: {0}")]
    ConstantsMismatch(String),

    /// A scalar special function overflowed the representable range.
    #[error("numeric overflow in {0}")]
    Overflow(&'static str),

    /// Empirical calibration was given an empty sample list.
    #[error("empty sample list for {0} scores")]
    EmptySamples(&'static str),

    /// A matrix file could not be parsed.
    #[error("malformed matrix file: {0}")]
    MalformedMatrix(String),

    /// Underlying I/O failure (projection import/export).
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            what,
            msg: msg.into(),
        }
    }
}
