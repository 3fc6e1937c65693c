//! Frequency and sum oracles under local differential privacy.

pub mod hadamard;
pub mod histogram;
pub mod sums;
pub mod value;

pub use histogram::{bitstogram_round, bitstogram_scan, histogram_query, HashedLayout, SuccinctHistogram};
pub use sums::{heavy_sums_round, noisy_average, sum_query, SumOracle};
pub use value::{bits_for, Value, ValueReader, ValueWriter};
