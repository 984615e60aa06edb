//! Exact similarity search for equal-length time series under band-constrained
//! dynamic time warping.
//!
//! Sequences are grouped into data pages. For each page a pointwise hull
//! (its envelope) is kept in a small envelope file, and queries bound the
//! distance to an entire page from its envelope before touching the page.
//! Because every bound used is a true lower bound, top-k and range results are
//! exact.

pub mod bench;
pub mod cli;
pub mod dtw;
pub mod error;
pub mod index;
pub mod lbounds;
pub mod query;
pub mod series;
pub mod store;

#[cfg(test)]
mod testing;

pub use error::{ErrorKind, Result, TwistError};
pub use series::{DistanceParams, GlobalConstraint, SequenceId, TimeSeries};
