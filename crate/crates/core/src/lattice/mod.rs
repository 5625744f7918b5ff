//! Site spaces, jump kernels, absorbing solves and sampled walks.

pub mod absorb;
pub mod kernel;
pub mod space;
pub mod walk;

pub use absorb::{absorb, hitting_probability, Absorption, Hitting};
pub use kernel::{Kernel, KernelSpec, OffsetSpec, Offsets};
pub use space::{Boundary, Landing, Side, SiteSpace, SpaceSpec};
pub use walk::{escape_probability, range_statistics, sample_walk, Loc, RangeStats, Termination, WalkPath};
