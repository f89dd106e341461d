//! Invariant measures of homogeneous quarter-plane random walks as sums of
//! geometric terms.
//!
//! The crate decides whether a walk can have such a measure, builds
//! compensation series for the walks that can, and checks every result
//! against a truncated-lattice stationary distribution.

pub mod cli;
pub mod compensation;
pub mod curve;
pub mod gamma;
pub mod io;
pub mod oracle;
pub mod poly;
pub mod walk;

pub use io::presets;
