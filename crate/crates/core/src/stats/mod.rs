//! Estimators and finite checks for the bounds used in the long-range
//! exclusion analysis.

mod bounds;
mod ordering;
mod profile;
mod sigma;

pub use bounds::*;
pub use ordering::*;
pub use profile::*;
pub use sigma::*;
