pub mod algebra;
pub mod cli;
pub mod error;
pub mod factorization;
pub mod lattice;
pub mod numerics;
pub mod reflexivity;
pub mod twoproj;

pub use error::{Error, Result};
pub use numerics::{CMatrix, ToleranceConfig, C64};
