//! Locally differentially private k-means clustering.
//!
//! Every agent holds one point of a dataset inside the unit ball and only
//! ever releases randomized reports. Two protocols are provided:
//!
//! * [`one_round`]: a single interaction round. Agents report grid cells at
//!   every scale through a succinct histogram and a sum oracle; the analyzer
//!   builds a weighted proxy dataset by greedy coverage and recovers centers in
//!   the original space.
//! * [`low_error`]: four rounds. Dyadic cell counts mark heavy cells for a
//!   ladder of cost guesses, locality-sensitive hashing inside light children
//!   of heavy cells proposes candidate centers, and two final rounds weight the
//!   candidates and undo the dimension reduction.
//!
//! The crate is `no_std` (with `alloc`). File formats, the experiment driver
//! and the command line live in the `ldpkm` companion crate.
//!
//! Every randomizer charges a per-agent [`privacy::Ledger`]; a run that would
//! overspend the configured budget aborts. [`protocol::NoiseMode::Noiseless`]
//! swaps each randomizer for its exact functional so the combinatorial parts
//! can be tested without noise.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod cells;
pub mod dimred;
pub mod error;
pub mod freq;
pub mod geometry;
pub mod grids;
pub mod kmeans;
pub mod low_error;
pub mod lsh;
pub mod one_round;
pub mod prf;
pub mod privacy;
pub mod protocol;

pub use error::{Error, Result};
pub use geometry::{CenterSet, ClusterAssignment, CostReport, Dataset};
pub use privacy::{Ledger, PrivacyBudget};
pub use protocol::NoiseMode;
