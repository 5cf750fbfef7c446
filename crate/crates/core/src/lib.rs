//! Group-fair capacitated assignment: concave fairness objectives over the
//! fractional assignment polytope, and rounding schemes with small capacity
//! violations.

pub mod constraints;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod frosting;
pub mod gen;
pub mod gap_round;
pub mod ilp;
pub mod instance;
mod interior;
pub mod matching;
pub mod model;
pub mod par;
pub mod simplex;
pub mod transport;

pub use error::{Error, Result};
