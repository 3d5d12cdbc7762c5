pub mod acquisition;
pub mod cbo_loop;
pub mod dr_prior;
pub mod error;
pub mod metrics;
pub mod parent_posterior;
pub mod rng;
pub mod scm;
pub mod surrogate;

pub use error::{CboError, Result};
