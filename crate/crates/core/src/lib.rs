//! Teacher–student analysis of restricted Boltzmann machines in the
//! replica-symmetric approximation, plus finite-size Monte Carlo checks.

pub mod cli;
pub mod error;
pub mod free_entropy;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod reduced;
pub mod saddle;
pub mod sim;
pub mod sampling;
pub mod spins;
pub mod stability;
pub mod validation;

pub use error::{Error, Result, Violation};
pub use model::{
    validate, CheckedConfig, CovarianceSpec, Dataset, Hyperparameters, OrderParameterState, PatternKind,
    PatternMatrix, StudentPrior, TeacherPrior,
};
