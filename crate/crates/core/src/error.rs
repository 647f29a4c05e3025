use std::fmt;

use thiserror::Error;

/// A single failed constraint found while validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPsdCovariance { min_eigenvalue: f64 },
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    ParameterOutOfRange { name: &'static str, value: f64, constraint: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPsdCovariance { min_eigenvalue } => {
                write!(f, "covariance is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")
            }
            Violation::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected dimension {expected}, found {found}")
            }
            Violation::ParameterOutOfRange { name, value, constraint } => {
                write!(f, "{name} = {value} violates {constraint}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NonPsdCovariance { min_eigenvalue: f64 },

    #[error("sin(pi/2 Q) is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NonPsdTransformedCovariance { min_eigenvalue: f64 },

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("{name} = {value} violates {constraint}")]
    ParameterOutOfRange { name: &'static str, value: f64, constraint: &'static str },

    #[error("enumeration over 2^{size} states exceeds the cap of 2^{cap}")]
    EnumerationCapExceeded { size: usize, cap: usize },

    #[error("non-finite effective energy encountered")]
    NonFiniteEnergy,

    #[error("precision matrix is singular (condition number {condition:e})")]
    SingularPrecision { condition: f64 },

    #[error("Gaussian sample covariance is singular")]
    SingularSampleCovariance,

    #[error("degenerate Wishart draw: zero diagonal entry after resampling")]
    DegenerateSample,

    #[error("non-finite update at iteration {iteration}")]
    NonFiniteUpdate { iteration: usize },

    #[error("teacher correlation d = {d} is negative")]
    NegativeCorrelation { d: f64 },

    #[error("Langevin trajectory diverged at step {step} (max |xi| = {norm:e})")]
    DivergedTrajectory { step: usize, norm: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        match v {
            Violation::NonPsdCovariance { min_eigenvalue } => Error::NonPsdCovariance { min_eigenvalue },
            Violation::DimensionMismatch { what, expected, found } => {
                Error::DimensionMismatch { what, expected, found }
            }
            Violation::ParameterOutOfRange { name, value, constraint } => {
                Error::ParameterOutOfRange { name, value, constraint }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
