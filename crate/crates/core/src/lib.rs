pub mod benchgen;
pub mod campaign;
pub mod dse;
pub mod error;
pub mod estimator;
pub mod modelfit;
pub mod refsim;
pub mod statetrace;
pub mod sysconfig;

pub use error::{Error, Result};
